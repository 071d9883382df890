use conceptmine::cav::{compute_cav, compute_cav_batch};
use conceptmine::dataset::{generate_synthetic, SyntheticSpec};
use conceptmine::mining::{mine_concepts, MiningParams};
use ndarray::Array2;
use proptest::prelude::*;

#[test]
fn batch_rows_equal_single_calls_and_stay_in_unit_interval() {
    let (ds, _) = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let book = mine_concepts(&ds, &MiningParams::default()).unwrap();
    let cavs = compute_cav_batch(&ds, &book).unwrap();
    for i in [0, 17, ds.n_samples() - 1] {
        let single = compute_cav(ds.sample_parts(i), ds.nonproto_row(i), &book).unwrap();
        assert_eq!(cavs.z.row(i).to_vec(), single.z);
        assert_eq!(cavs.g.row(i).to_vec(), single.g);
    }
    assert!(cavs.z.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn noiseless_sample_hits_its_planted_centroid() {
    let spec = SyntheticSpec {
        noise_sigma: 0.0,
        ..Default::default()
    };
    let (ds, truth) = generate_synthetic(&spec).unwrap();
    let book = mine_concepts(&ds, &MiningParams::default()).unwrap();
    let cavs = compute_cav_batch(&ds, &book).unwrap();
    for i in 0..ds.n_samples() {
        let (j, p) = (ds.labels()[i], 0);
        let planted = truth.planted_means.slice(ndarray::s![j, p, truth.assignment[[i, p]], ..]);
        let e = book
            .entries
            .iter()
            .position(|e| {
                e.class == j
                    && e.part == p
                    && e.centroid.iter().zip(planted.iter()).all(|(c, &m)| (c - f64::from(m)).abs() < 1e-6)
            })
            .expect("planted centroid mined");
        let max = cavs.z.row(i).fold(0.0f64, |a, &b| a.max(b));
        assert!((cavs.z[[i, e]] - max).abs() < 1e-12);
        assert!((cavs.z[[i, e]] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn strong_activations_track_part_count() {
    let (ds, _) = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let book = mine_concepts(&ds, &MiningParams::default()).unwrap();
    let cavs = compute_cav_batch(&ds, &book).unwrap();
    let k = ds.n_parts() as f64;
    for row in cavs.z.outer_iter() {
        let strong = row.iter().filter(|&&v| v > 0.9).count() as f64;
        assert!((strong - k).abs() <= 1.0, "{strong} strong activations");
    }
}

proptest! {
    #[test]
    fn positive_rescaling_leaves_z_unchanged(seed in 0u64..50, scale in 0.01f32..100.0) {
        let spec = SyntheticSpec { n_classes: 2, n_parts: 2, samples_per_class: 10, seed, ..Default::default() };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        let book = mine_concepts(&ds, &MiningParams::default()).unwrap();
        let parts = ds.sample_parts(0).to_owned();
        let scaled: Array2<f32> = parts.mapv(|v| v * scale);
        let a = compute_cav(parts.view(), ds.nonproto_row(0), &book).unwrap();
        let b = compute_cav(scaled.view(), ds.nonproto_row(0), &book).unwrap();
        for (x, y) in a.z.iter().zip(&b.z) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }
}
