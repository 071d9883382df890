//! Explainability metrics: faithfulness, stability, consistency and
//! sparseness, plus the assignment solver used by stability.

mod hungarian;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cav::CavMatrix;
use crate::dataset::{split_kfold, PartFeatureDataset};
use crate::error::{Error, Result};
use crate::head::{concept_contributions, SparseHead};
use crate::linalg;
use crate::mining::{mine_concepts, ConceptBook, MiningParams};
use crate::occlusion::OcclusionPoint;

pub use hungarian::{hungarian, Assignment};

/// Concept indices of one sample ordered by contribution to `class`,
/// largest first; lower indices first on ties.
pub fn contribution_ranking(z: &[f64], head: &SparseHead, class: usize) -> Result<Vec<usize>> {
    let scores = concept_contributions(z, head, class)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order)
}

fn predict_row(z: ArrayView1<'_, f64>, g: ArrayView1<'_, f64>, head: &SparseHead) -> usize {
    let o = z.dot(&head.w1) + g.dot(&head.w2) + &head.b;
    linalg::argmax(o.as_slice().expect("owned array"))
}

fn check_compat(cavs: &CavMatrix, labels: &[usize], head: &SparseHead) -> Result<()> {
    if cavs.z.ncols() != head.d_c() || cavs.g.ncols() != head.feat_dim() {
        return Err(Error::Compatibility(format!(
            "CAVs have d_c={}, d_f={} but head expects d_c={}, d_f={}",
            cavs.z.ncols(),
            cavs.g.ncols(),
            head.d_c(),
            head.feat_dim()
        )));
    }
    if cavs.z.nrows() != labels.len() || cavs.g.nrows() != labels.len() {
        return Err(Error::validation("labels", "row count mismatch"));
    }
    Ok(())
}

/// Accuracy drop (percentage points) after deleting each sample's top-n
/// concepts, ranked by contribution to the sample's predicted class.
/// Deletion sets the activation to 0. `n` above `d_c` is clamped.
pub fn faithfulness(
    cavs: &CavMatrix,
    labels: &[usize],
    head: &SparseHead,
    book: &ConceptBook,
    n_list: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    check_compat(cavs, labels, head)?;
    if book.d_c() != head.d_c() {
        return Err(Error::Compatibility(format!(
            "book d_c={} but head d_c={}",
            book.d_c(),
            head.d_c()
        )));
    }
    let n = labels.len();
    let d_c = head.d_c();
    let mut out = BTreeMap::new();
    if n == 0 {
        for &k in n_list {
            out.insert(k, 0.0);
        }
        return Ok(out);
    }

    let mut rankings = Vec::with_capacity(n);
    let mut base_hits = 0usize;
    for i in 0..n {
        let pred = predict_row(cavs.z.row(i), cavs.g.row(i), head);
        if pred == labels[i] {
            base_hits += 1;
        }
        let z = cavs.z.row(i).to_vec();
        rankings.push(contribution_ranking(&z, head, pred)?);
    }

    for &requested in n_list {
        let k = if requested > d_c {
            log::warn!("faithfulness: n={requested} exceeds d_c={d_c}, clamping");
            d_c
        } else {
            requested
        };
        if k == 0 {
            out.insert(requested, 0.0);
            continue;
        }
        let mut hits = 0usize;
        for i in 0..n {
            let mut z = cavs.z.row(i).to_owned();
            for &c in &rankings[i][..k] {
                z[c] = 0.0;
            }
            if predict_row(z.view(), cavs.g.row(i), head) == labels[i] {
                hits += 1;
            }
        }
        let drop = 100.0 * (base_hits as f64 - hits as f64) / n as f64;
        out.insert(requested, drop);
    }
    Ok(out)
}

fn normalized_rows(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = z.to_owned();
    for mut row in out.outer_iter_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}

/// Mean pairwise CAV cosine within classes (averaged over classes with at
/// least two samples) and across distinct classes, both scaled to ±100.
pub fn consistency(z: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, f64)> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::validation("labels", "row count mismatch"));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let present = by_class.iter().filter(|c| !c.is_empty()).count();
    if present < 2 {
        return Err(Error::InvalidArgument(
            "consistency needs samples from at least two classes".into(),
        ));
    }
    let unit = normalized_rows(z);
    let cos = |a: usize, b: usize| unit.row(a).dot(&unit.row(b));

    let mut class_means = Vec::new();
    for members in by_class.iter().filter(|c| c.len() >= 2) {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for (t, &a) in members.iter().enumerate() {
            for &b in &members[t + 1..] {
                sum += cos(a, b);
                pairs += 1;
            }
        }
        class_means.push(sum / pairs as f64);
    }
    if class_means.is_empty() {
        return Err(Error::InvalidArgument(
            "intra-class consistency is undefined: every class has a single sample".into(),
        ));
    }
    let intra = 100.0 * class_means.iter().sum::<f64>() / class_means.len() as f64;

    let mut sum = 0.0;
    let mut pairs = 0usize;
    for a in 0..n {
        for b in (a + 1)..n {
            if labels[a] != labels[b] {
                sum += cos(a, b);
                pairs += 1;
            }
        }
    }
    let inter = 100.0 * sum / pairs as f64;
    Ok((intra, inter))
}

/// Mean Hoyer sparseness of the rows, scaled to `[0, 100]`. All-zero rows
/// count as maximally sparse.
pub fn sparseness(z: ArrayView2<'_, f64>) -> Result<f64> {
    let d_c = z.ncols();
    if d_c < 2 {
        return Err(Error::InvalidArgument(format!(
            "sparseness needs d_c >= 2, got {d_c}"
        )));
    }
    if z.nrows() == 0 {
        return Err(Error::InvalidArgument("sparseness of an empty matrix".into()));
    }
    let root = (d_c as f64).sqrt();
    let total: f64 = z
        .outer_iter()
        .map(|row| {
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            let l2 = row.dot(&row).sqrt();
            if l2 == 0.0 {
                1.0
            } else {
                ((root - l1 / l2) / (root - 1.0)).clamp(0.0, 1.0)
            }
        })
        .sum();
    Ok(100.0 * total / z.nrows() as f64)
}

/// Similarity of two centroid sets after optimal matching on `1 - cos`.
/// Unmatched slots (unequal sizes) score 0; matched pairs score
/// `max(cos, 0)`. Returns the mean over `max(|a|, |b|)` slots.
pub fn matched_similarity(a: &[&[f64]], b: &[&[f64]]) -> Result<f64> {
    let m = a.len().max(b.len());
    if m == 0 {
        return Ok(1.0);
    }
    let mut cos = Array2::<f64>::zeros((m, m));
    let mut cost = Array2::<f64>::from_elem((m, m), 1.0);
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let c = linalg::cosine(x, y);
            cos[[i, j]] = c;
            cost[[i, j]] = 1.0 - c;
        }
    }
    let assign = hungarian(cost.view())?;
    let sum: f64 = assign
        .perm
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < a.len() && j < b.len())
        .map(|(i, &j)| cos[[i, j]].max(0.0))
        .sum();
    Ok(sum / m as f64)
}

/// Stability of mined concepts across stratified folds, in `[0, 100]`.
///
/// Concepts are mined separately on each fold; for every fold pair and every
/// (class, part) cell the two centroid sets are matched with
/// [`matched_similarity`]. The score is 100 × the mean over all fold pairs
/// and cells.
pub fn stability(
    ds: &PartFeatureDataset,
    k: usize,
    params: &MiningParams,
    seed: u64,
) -> Result<f64> {
    let folds = split_kfold(ds, k, seed)?;
    let books = folds
        .iter()
        .map(|f| mine_concepts(&ds.subset(f)?, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(100.0 * book_agreement(&books, ds.n_classes(), ds.n_parts())?)
}

/// Mean cell-wise [`matched_similarity`] over all pairs of books.
pub fn book_agreement(books: &[ConceptBook], n_classes: usize, n_parts: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for f in 0..books.len() {
        for h in (f + 1)..books.len() {
            for j in 0..n_classes {
                for p in 0..n_parts {
                    let a: Vec<&[f64]> = books[f]
                        .cell(j, p)
                        .into_iter()
                        .map(|e| books[f].entries[e].centroid.as_slice())
                        .collect();
                    let b: Vec<&[f64]> = books[h]
                        .cell(j, p)
                        .into_iter()
                        .map(|e| books[h].entries[e].centroid.as_slice())
                        .collect();
                    total += matched_similarity(&a, &b)?;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("need at least two books".into()));
    }
    Ok(total / count as f64)
}

/// Explainability and accuracy summary of one trained configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// F(n): percentage-point accuracy drop after deleting the top-n concepts.
    pub faithfulness: BTreeMap<usize, f64>,
    /// `None` when some class has fewer samples than the fold count.
    pub stability: Option<f64>,
    pub consistency_intra: f64,
    pub consistency_inter: f64,
    pub sparseness: f64,
    /// Accuracy (%) of the full head.
    pub accuracy: f64,
    /// Accuracy (%) with `W2` masked.
    pub accuracy_concepts_only: f64,
    /// Accuracy (%) with `W1` masked.
    pub accuracy_nonproto_only: f64,
    pub d_c: usize,
    /// Accuracy and F(3) under part occlusion, fraction 0 first.
    #[serde(default)]
    pub occlusion: Vec<OcclusionPoint>,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        let mut values: Vec<f64> = self.faithfulness.values().copied().collect();
        values.extend([
            self.consistency_intra,
            self.consistency_inter,
            self.sparseness,
            self.accuracy,
            self.accuracy_concepts_only,
            self.accuracy_nonproto_only,
        ]);
        values.extend(self.stability);
        values.extend(self.occlusion.iter().flat_map(|p| [p.accuracy, p.f3]));
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("report", "non-finite metric"));
        }
        Ok(())
    }

    fn csv_columns(&self) -> Vec<(String, String)> {
        let mut cols = vec![
            ("config_hash".to_string(), self.config_hash.clone()),
            ("seed".to_string(), self.seed.to_string()),
            ("d_c".to_string(), self.d_c.to_string()),
            ("accuracy".to_string(), format!("{:.4}", self.accuracy)),
            (
                "accuracy_concepts_only".to_string(),
                format!("{:.4}", self.accuracy_concepts_only),
            ),
            (
                "accuracy_nonproto_only".to_string(),
                format!("{:.4}", self.accuracy_nonproto_only),
            ),
            ("consistency_intra".to_string(), format!("{:.4}", self.consistency_intra)),
            ("consistency_inter".to_string(), format!("{:.4}", self.consistency_inter)),
            ("sparseness".to_string(), format!("{:.4}", self.sparseness)),
            (
                "stability".to_string(),
                self.stability.map_or(String::new(), |s| format!("{s:.4}")),
            ),
        ];
        for (n, v) in &self.faithfulness {
            cols.push((format!("F{n}"), format!("{v:.4}")));
        }
        for p in &self.occlusion {
            cols.push((format!("occ{}_accuracy", p.fraction), format!("{:.4}", p.accuracy)));
            cols.push((format!("occ{}_F3", p.fraction), format!("{:.4}", p.f3)));
        }
        cols
    }

    pub fn csv_header(&self) -> String {
        self.csv_columns()
            .into_iter()
            .map(|(k, _)| k)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        self.csv_columns()
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.csv_header())?;
        writeln!(f, "{}", self.csv_row())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    #[test]
    fn sparseness_hand_values() {
        let one_hot = arr2(&[[1.0, 0.0, 0.0], [0.0, 0.3, 0.0]]);
        assert!((sparseness(one_hot.view()).unwrap() - 100.0).abs() < 1e-12);
        let uniform = Array2::from_elem((2, 5), 0.4);
        assert!(sparseness(uniform.view()).unwrap().abs() < 1e-9);
        let half = arr2(&[[1.0, 1.0, 0.0, 0.0]]);
        let expected = 100.0 * (2.0 - 2.0 / 2f64.sqrt());
        assert!((sparseness(half.view()).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 58.58).abs() < 0.01);
        let zeros = Array2::<f64>::zeros((1, 3));
        assert_eq!(sparseness(zeros.view()).unwrap(), 100.0);
        assert!(sparseness(Array2::<f64>::zeros((1, 1)).view()).is_err());
    }

    #[test]
    fn consistency_constructed_cases() {
        let z = arr2(&[[1.0, 0.0], [1.0, 0.0], [0.0, 2.0], [0.0, 2.0]]);
        let (intra, inter) = consistency(z.view(), &[0, 0, 1, 1]).unwrap();
        assert!((intra - 100.0).abs() < 1e-12);
        assert!(inter.abs() < 1e-12);

        let same = Array2::from_elem((4, 3), 0.5);
        let (intra, inter) = consistency(same.view(), &[0, 0, 1, 1]).unwrap();
        assert!((intra - 100.0).abs() < 1e-9);
        assert!((inter - 100.0).abs() < 1e-9);
    }

    #[test]
    fn consistency_errors() {
        let z = Array2::from_elem((2, 2), 1.0);
        assert!(consistency(z.view(), &[0, 1]).is_err());
        assert!(consistency(z.view(), &[0, 0]).is_err());
    }

    #[test]
    fn matched_similarity_pads_unmatched() {
        let a: Vec<&[f64]> = vec![&[1.0, 0.0], &[0.0, 1.0]];
        let b: Vec<&[f64]> = vec![&[0.0, 3.0]];
        // best match: a[1] with b[0] (cos 1), a[0] unmatched (0)
        assert!((matched_similarity(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert!((matched_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}
