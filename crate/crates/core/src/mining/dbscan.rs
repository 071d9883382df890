//! Density-based clustering (DBSCAN) with Euclidean distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    /// Neighborhood radius (inclusive).
    pub eps: f64,
    /// Minimum neighborhood size of a core point, the point itself included.
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        let p = Self { eps, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::InvalidArgument("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

fn neighborhoods(points: &[Vec<f64>], eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let eps2 = eps * eps;
    let mut nbrs = vec![Vec::new(); n];
    for i in 0..n {
        nbrs[i].push(i);
        for j in (i + 1)..n {
            if linalg::sq_dist(&points[i], &points[j]) <= eps2 {
                nbrs[i].push(j);
                nbrs[j].push(i);
            }
        }
    }
    for v in &mut nbrs {
        v.sort_unstable();
    }
    nbrs
}

/// Cluster id per point, `None` for noise.
///
/// Clusters are numbered in the order their first core point appears when
/// scanning indices ascending; a border point reachable from several
/// clusters joins the first one that reaches it.
pub fn dbscan(points: &[Vec<f64>], params: &DbscanParams) -> Vec<Option<usize>> {
    let n = points.len();
    let nbrs = neighborhoods(points, params.eps);
    let is_core: Vec<bool> = nbrs.iter().map(|v| v.len() >= params.min_pts).collect();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut expanded = vec![false; n];
    let mut next_id = 0;

    for start in 0..n {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[start] = Some(id);
        expanded[start] = true;
        let mut frontier: Vec<usize> = nbrs[start].clone();
        let mut head = 0;
        while head < frontier.len() {
            let q = frontier[head];
            head += 1;
            if labels[q].is_none() {
                labels[q] = Some(id);
            }
            if is_core[q] && !expanded[q] && labels[q] == Some(id) {
                expanded[q] = true;
                frontier.extend(nbrs[q].iter().copied().filter(|&r| labels[r].is_none()));
            }
        }
    }
    labels
}
