//! Concept mining: per-(class, part) DBSCAN, the resulting concept book,
//! and optional Ward merging of its centroids.

mod book;
mod dbscan;
mod merge;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::PartFeatureDataset;
use crate::error::{Error, Result};
use crate::linalg;

pub use book::{ConceptBook, ConceptEntry};
pub use dbscan::{dbscan, DbscanParams};
pub use merge::{merge_centroids, ward_distance, MergeConfig, MergeLevel};

/// DBSCAN settings for mining; unset fields are chosen per cell.
///
/// Adaptive defaults: `eps` is twice the median nearest-neighbor distance of
/// the cell, `min_pts` is `max(3, cell_size / 20)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
}

impl From<DbscanParams> for MiningParams {
    fn from(p: DbscanParams) -> Self {
        Self {
            eps: Some(p.eps),
            min_pts: Some(p.min_pts),
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
            }
        }
        if self.min_pts == Some(0) {
            return Err(Error::InvalidArgument("min_pts must be >= 1".into()));
        }
        Ok(())
    }

    /// Concrete parameters for one cell of points.
    pub fn resolve(&self, points: &[Vec<f64>]) -> DbscanParams {
        let eps = self
            .eps
            .unwrap_or_else(|| (2.0 * median_nn_distance(points)).max(1e-9));
        let min_pts = self.min_pts.unwrap_or_else(|| (points.len() / 20).max(3));
        DbscanParams { eps, min_pts }
    }
}

fn median_nn_distance(points: &[Vec<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut nn: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, a)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| linalg::dist(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len();
    if m % 2 == 1 {
        nn[m / 2]
    } else {
        0.5 * (nn[m / 2 - 1] + nn[m / 2])
    }
}

/// Book plus the entry each `(sample, part)` feature was assigned to.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedConcepts {
    pub book: ConceptBook,
    /// `[n_samples × K]`; `None` marks DBSCAN noise.
    pub membership: Array2<Option<usize>>,
    /// Cells where every point was noise and the cell mean was used.
    pub fallback_cells: Vec<(usize, usize)>,
}

/// Runs DBSCAN on every (class, part) bag and keeps the cluster means.
pub fn mine_concepts(ds: &PartFeatureDataset, params: &MiningParams) -> Result<ConceptBook> {
    Ok(mine_concepts_detailed(ds, params)?.book)
}

pub fn mine_concepts_detailed(
    ds: &PartFeatureDataset,
    params: &MiningParams,
) -> Result<MinedConcepts> {
    params.validate()?;
    let d = ds.feat_dim();
    let mut entries = Vec::new();
    let mut membership = Array2::from_elem((ds.n_samples(), ds.n_parts()), None);
    let mut fallback_cells = Vec::new();

    for j in 0..ds.n_classes() {
        let members = ds.class_indices(j);
        if members.is_empty() {
            return Err(Error::validation(
                "labels",
                format!("class {j} has no samples"),
            ));
        }
        for p in 0..ds.n_parts() {
            let bag: Vec<Vec<f64>> = members
                .iter()
                .map(|&i| ds.part(i, p).iter().map(|&v| f64::from(v)).collect())
                .collect();
            let dp = params.resolve(&bag);
            let labels = dbscan(&bag, &dp);
            let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);

            if n_clusters == 0 {
                log::debug!("class {j}, part {p}: all {} points are noise", bag.len());
                fallback_cells.push((j, p));
                for &i in &members {
                    membership[[i, p]] = Some(entries.len());
                }
                entries.push(ConceptEntry {
                    class: j,
                    part: p,
                    local_id: 0,
                    member_count: bag.len(),
                    centroid: mean_of(bag.iter(), d),
                });
                continue;
            }

            for l in 0..n_clusters {
                let in_cluster: Vec<usize> =
                    (0..bag.len()).filter(|&t| labels[t] == Some(l)).collect();
                for &t in &in_cluster {
                    membership[[members[t], p]] = Some(entries.len());
                }
                entries.push(ConceptEntry {
                    class: j,
                    part: p,
                    local_id: l,
                    member_count: in_cluster.len(),
                    centroid: mean_of(in_cluster.iter().map(|&t| &bag[t]), d),
                });
            }
        }
    }

    let book = ConceptBook::new(d, entries)?;
    Ok(MinedConcepts {
        book,
        membership,
        fallback_cells,
    })
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    let mut count = 0usize;
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
        count += 1;
    }
    acc.iter().map(|a| a / count as f64).collect()
}
