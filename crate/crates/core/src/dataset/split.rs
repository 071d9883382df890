use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PartFeatureDataset;
use crate::error::{Error, Result};

/// Stratified k-fold partition of the sample indices.
///
/// Each class is shuffled with `seed` and dealt round-robin over the folds,
/// continuing where the previous class stopped so that total fold sizes stay
/// balanced too. Indices inside a fold are sorted ascending.
pub fn split_kfold(ds: &PartFeatureDataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k-fold split needs k >= 2, got {k}"
        )));
    }
    let counts = ds.class_counts();
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < k) {
        return Err(Error::Stratification { class, count, k });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for j in 0..ds.n_classes() {
        let mut idx = ds.class_indices(j);
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    fn labelled(labels: Vec<usize>, l: usize) -> PartFeatureDataset {
        let n = labels.len();
        PartFeatureDataset::new(l, Array3::zeros((n, 1, 1)), Array2::zeros((n, 1)), labels)
            .unwrap()
    }

    #[test]
    fn single_class_ten_into_five() {
        let ds = labelled(vec![0; 10], 1);
        let folds = split_kfold(&ds, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn k_below_two_is_rejected() {
        let ds = labelled(vec![0; 4], 1);
        assert!(matches!(
            split_kfold(&ds, 1, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn small_class_names_the_class() {
        let ds = labelled(vec![0, 0, 0, 1, 1], 2);
        match split_kfold(&ds, 3, 0) {
            Err(Error::Stratification { class, count, k }) => {
                assert_eq!((class, count, k), (1, 2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_folds() {
        let ds = labelled((0..30).map(|i| i % 3).collect(), 3);
        assert_eq!(split_kfold(&ds, 4, 9).unwrap(), split_kfold(&ds, 4, 9).unwrap());
        assert_ne!(split_kfold(&ds, 4, 9).unwrap(), split_kfold(&ds, 4, 10).unwrap());
    }

    proptest! {
        #[test]
        fn disjoint_cover_balanced_per_class(
            per_class in proptest::collection::vec(5usize..20, 1..5),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = per_class
                .iter()
                .enumerate()
                .flat_map(|(j, &c)| std::iter::repeat(j).take(c))
                .collect();
            let ds = labelled(labels.clone(), per_class.len());
            let folds = split_kfold(&ds, k, seed).unwrap();
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for j in 0..per_class.len() {
                let sizes: Vec<usize> = folds
                    .iter()
                    .map(|f| f.iter().filter(|&&i| labels[i] == j).count())
                    .collect();
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            }
        }
    }
}
