//! Prototype centers learned with the marginal cluster-center (MCC) loss.
//!
//! For a sample with part features `f_1..f_K` and centers `c_1..c_K`:
//!
//! ```text
//! L = Σ_p [ |f_p - c_p| - m1 ]₊ + (1/K) Σ_p Σ_{q≠p} [ m2 - |c_p - c_q| ]₊
//! ```
//!
//! averaged over the batch. Distances are Euclidean. Only the centers are
//! trainable; the part features are fixed inputs.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::PartFeatureDataset;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmConfig {
    /// Intra-part margin.
    pub m1: f64,
    /// Inter-prototype margin.
    pub m2: f64,
    /// Weight of the MCC term in the part loss. Only scales the reported
    /// loss; the optimum is unaffected since no other part loss is present.
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Std of the seed-driven jitter added to the per-part mean at init.
    pub init_jitter: f64,
    pub seed: u64,
}

impl Default for McmConfig {
    fn default() -> Self {
        Self {
            m1: 0.3,
            m2: 1.5,
            alpha: 1.5,
            lr: 0.05,
            epochs: 50,
            batch_size: 32,
            init_jitter: 1e-3,
            seed: 0,
        }
    }
}

impl McmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.m1 >= 0.0 && self.m2 >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::InvalidArgument("m1, m2 and alpha must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.m2 <= self.m1 {
            log::warn!(
                "m2 ({}) <= m1 ({}): prototypes may collapse onto each other",
                self.m2,
                self.m1
            );
        }
        Ok(())
    }
}

/// One learnable center per part, `[K × d_f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeCenters {
    #[serde(with = "crate::linalg::rows")]
    pub centers: Array2<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl PrototypeCenters {
    pub fn new(centers: Array2<f64>) -> Result<Self> {
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("centers", "non-finite value"));
        }
        Ok(Self {
            centers,
            config_hash: None,
        })
    }

    pub fn n_parts(&self) -> usize {
        self.centers.nrows()
    }

    pub fn feat_dim(&self) -> usize {
        self.centers.ncols()
    }
}

fn check_shapes(batch: &ArrayView3<'_, f64>, centers: &ArrayView2<'_, f64>) -> Result<()> {
    let (b, k, d) = batch.dim();
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    if centers.dim() != (k, d) {
        return Err(Error::validation(
            "centers",
            format!("shape {:?} does not match batch parts ({k}, {d})", centers.dim()),
        ));
    }
    Ok(())
}

fn pair_term(centers: &ArrayView2<'_, f64>, m2: f64) -> f64 {
    let k = centers.nrows();
    let mut total = 0.0;
    for p in 0..k {
        for q in 0..k {
            if q != p {
                let d = linalg::dist(
                    centers.row(p).as_slice().expect("standard layout"),
                    centers.row(q).as_slice().expect("standard layout"),
                );
                total += (m2 - d).max(0.0);
            }
        }
    }
    total / k as f64
}

/// Batch-mean MCC loss. `batch` is `[B × K × d_f]`.
pub fn mcc_loss(
    batch: ArrayView3<'_, f64>,
    centers: ArrayView2<'_, f64>,
    m1: f64,
    m2: f64,
) -> Result<f64> {
    check_shapes(&batch, &centers)?;
    let centers = centers.as_standard_layout();
    let (b, k, _) = batch.dim();
    let mut intra = 0.0;
    for sample in batch.outer_iter() {
        let sample = sample.as_standard_layout();
        for p in 0..k {
            let d = linalg::dist(
                sample.row(p).as_slice().expect("standard layout"),
                centers.row(p).as_slice().expect("standard layout"),
            );
            intra += (d - m1).max(0.0);
        }
    }
    Ok(intra / b as f64 + pair_term(&centers.view(), m2))
}

/// Subgradient of [`mcc_loss`] with respect to the centers.
///
/// Hinges contribute nothing at their kink, and coincident centers use the
/// zero vector as the undefined unit direction.
pub fn mcc_gradients(
    batch: ArrayView3<'_, f64>,
    centers: ArrayView2<'_, f64>,
    m1: f64,
    m2: f64,
) -> Result<Array2<f64>> {
    check_shapes(&batch, &centers)?;
    let centers = centers.as_standard_layout();
    let (b, k, d) = batch.dim();
    let mut grad = Array2::<f64>::zeros((k, d));
    let inv_b = 1.0 / b as f64;
    for sample in batch.outer_iter() {
        for p in 0..k {
            let f = sample.row(p);
            let c = centers.row(p);
            let diff: Vec<f64> = f.iter().zip(c.iter()).map(|(a, b)| a - b).collect();
            let dist = linalg::norm(&diff);
            if dist > m1 {
                for (g, x) in grad.row_mut(p).iter_mut().zip(&diff) {
                    *g -= inv_b * x / dist;
                }
            }
        }
    }
    let inv_k = 1.0 / k as f64;
    for p in 0..k {
        for q in 0..k {
            if q == p {
                continue;
            }
            let diff: Vec<f64> = centers
                .row(p)
                .iter()
                .zip(centers.row(q).iter())
                .map(|(a, b)| a - b)
                .collect();
            let dist = linalg::norm(&diff);
            if dist < m2 && dist > 0.0 {
                for t in 0..d {
                    let u = inv_k * diff[t] / dist;
                    grad[[p, t]] -= u;
                    grad[[q, t]] += u;
                }
            }
        }
    }
    Ok(grad)
}

/// Result of [`fit_prototype_centers`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFit {
    pub centers: PrototypeCenters,
    pub initial_loss: f64,
    /// Loss of the returned centers (best seen, never above `initial_loss`).
    pub final_loss: f64,
    /// Full-data loss after every epoch.
    pub history: Vec<f64>,
    /// `alpha * final_loss`, the weighted term of the part loss.
    pub weighted_loss: f64,
}

pub(crate) fn parts_f64(ds: &PartFeatureDataset) -> Array3<f64> {
    ds.parts().mapv(f64::from)
}

/// Per-part mean plus `N(0, init_jitter²)` noise drawn from `seed`.
pub fn initial_centers(ds: &PartFeatureDataset, cfg: &McmConfig) -> Result<PrototypeCenters> {
    let parts = parts_f64(ds);
    let mut centers = parts
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::InvalidArgument("dataset has no samples".into()))?;
    if cfg.init_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let jitter = Normal::new(0.0, cfg.init_jitter)
            .map_err(|e| Error::InvalidArgument(format!("init_jitter: {e}")))?;
        centers.mapv_inplace(|v| v + jitter.sample(&mut rng));
    }
    PrototypeCenters::new(centers)
}

pub fn fit_prototype_centers(ds: &PartFeatureDataset, cfg: &McmConfig) -> Result<PrototypeFit> {
    let init = initial_centers(ds, cfg)?;
    fit_prototype_centers_from(ds, cfg, init)
}

/// Mini-batch gradient descent with constant step from `init`.
pub fn fit_prototype_centers_from(
    ds: &PartFeatureDataset,
    cfg: &McmConfig,
    init: PrototypeCenters,
) -> Result<PrototypeFit> {
    cfg.validate()?;
    let parts = parts_f64(ds);
    if init.centers.dim() != (ds.n_parts(), ds.feat_dim()) {
        return Err(Error::validation(
            "centers",
            format!(
                "init shape {:?} does not match dataset ({}, {})",
                init.centers.dim(),
                ds.n_parts(),
                ds.feat_dim()
            ),
        ));
    }
    let n = ds.n_samples();
    // Shuffling uses a stream separate from the init jitter.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut centers = init.centers;
    let initial_loss = mcc_loss(parts.view(), centers.view(), cfg.m1, cfg.m2)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, lr: cfg.lr });
    }
    let mut best = (initial_loss, centers.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = parts.select(Axis(0), chunk);
            let grad = mcc_gradients(batch.view(), centers.view(), cfg.m1, cfg.m2)?;
            centers.scaled_add(-cfg.lr, &grad);
        }
        let loss = mcc_loss(parts.view(), centers.view(), cfg.m1, cfg.m2)?;
        if !loss.is_finite() || centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch, lr: cfg.lr });
        }
        log::debug!("mcc epoch {epoch}: loss {loss:.6}");
        history.push(loss);
        if loss < best.0 {
            best = (loss, centers.clone());
        }
    }

    let (final_loss, centers) = best;
    Ok(PrototypeFit {
        centers: PrototypeCenters::new(centers)?,
        initial_loss,
        final_loss,
        history,
        weighted_loss: cfg.alpha * final_loss,
    })
}
