//! Sparse linear head over concept activations and non-prototypical features.
//!
//! `o = W1ᵀ z + W2ᵀ g + b`, trained by minimizing mean softmax cross-entropy
//! plus `λ·((1-γ)·½·|W1|_F² + γ·|W1|₁)` with proximal gradient descent. Only
//! `W1` is penalized.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseHead {
    /// `[d_c × L]`
    #[serde(rename = "W1", with = "linalg::rows")]
    pub w1: Array2<f64>,
    /// `[d_f × L]`
    #[serde(rename = "W2", with = "linalg::rows")]
    pub w2: Array2<f64>,
    /// `[L]`
    #[serde(with = "linalg::rows::vector")]
    pub b: Array1<f64>,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Which weight block a head evaluation may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMask {
    Full,
    /// `W2` zeroed: decisions from concept activations only.
    ConceptsOnly,
    /// `W1` zeroed: decisions from non-prototypical features only.
    NonProtoOnly,
}

impl SparseHead {
    pub fn zeros(d_c: usize, d_f: usize, n_classes: usize) -> Self {
        Self {
            w1: Array2::zeros((d_c, n_classes)),
            w2: Array2::zeros((d_f, n_classes)),
            b: Array1::zeros(n_classes),
            lambda: 0.0,
            gamma: 0.0,
            config_hash: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.b.len();
        if self.w1.ncols() != l || self.w2.ncols() != l {
            return Err(Error::validation(
                "head",
                format!(
                    "W1 {:?}, W2 {:?} and b [{l}] disagree on the class count",
                    self.w1.dim(),
                    self.w2.dim()
                ),
            ));
        }
        let finite = self.w1.iter().chain(self.w2.iter()).chain(self.b.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("head", "non-finite weight"));
        }
        Ok(())
    }

    pub fn d_c(&self) -> usize {
        self.w1.nrows()
    }

    pub fn feat_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.b.len()
    }

    pub fn masked(&self, mask: HeadMask) -> SparseHead {
        let mut h = self.clone();
        match mask {
            HeadMask::Full => {}
            HeadMask::ConceptsOnly => h.w2.fill(0.0),
            HeadMask::NonProtoOnly => h.w1.fill(0.0),
        }
        h
    }

    /// Logits for a batch: `[n × L]`.
    pub fn logits(&self, z: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut o = z.dot(&self.w1) + g.dot(&self.w2);
        o += &self.b;
        o
    }

    pub fn predict_batch(&self, z: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>) -> Vec<usize> {
        self.logits(z, g)
            .outer_iter()
            .map(|row| linalg::argmax(row.as_slice().expect("standard layout")))
            .collect()
    }
}

/// Logits `W1ᵀ z + W2ᵀ g + b` of a single sample.
pub fn head_forward(z: &[f64], g: &[f64], head: &SparseHead) -> Result<Vec<f64>> {
    if z.len() != head.d_c() || g.len() != head.feat_dim() {
        return Err(Error::validation(
            "head_input",
            format!(
                "z has {} entries (head d_c={}), g has {} (head d_f={})",
                z.len(),
                head.d_c(),
                g.len(),
                head.feat_dim()
            ),
        ));
    }
    let o = ArrayView1::from(z).dot(&head.w1) + ArrayView1::from(g).dot(&head.w2) + &head.b;
    Ok(o.to_vec())
}

/// Predicted class; the lowest index wins ties.
pub fn predict(z: &[f64], g: &[f64], head: &SparseHead) -> Result<usize> {
    Ok(linalg::argmax(&head_forward(z, g, head)?))
}

/// `z_k · W1[k, class]` for every concept `k`.
pub fn concept_contributions(z: &[f64], head: &SparseHead, class: usize) -> Result<Vec<f64>> {
    if class >= head.n_classes() {
        return Err(Error::Index {
            index: class,
            bound: head.n_classes(),
        });
    }
    if z.len() != head.d_c() {
        return Err(Error::validation(
            "z",
            format!("{} entries, head d_c={}", z.len(), head.d_c()),
        ));
    }
    Ok(z.iter()
        .zip(head.w1.column(class))
        .map(|(zk, w)| zk * w)
        .collect())
}

/// `λ·((1-γ)·½·|W1|_F² + γ·|W1|₁)`.
pub fn elastic_net_penalty(w1: ArrayView2<'_, f64>, lambda: f64, gamma: f64) -> f64 {
    let sq: f64 = w1.iter().map(|w| w * w).sum();
    let l1: f64 = w1.iter().map(|w| w.abs()).sum();
    lambda * ((1.0 - gamma) * 0.5 * sq + gamma * l1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadTrainConfig {
    /// Sparsity strength λ.
    pub lambda: f64,
    /// L1 share γ of the elastic net, in `[0, 1]`.
    pub gamma: f64,
    /// Weight of the classification loss in the staged objective. The
    /// trainer itself minimizes the unweighted loss; the pipeline scales the
    /// initial step by β instead.
    pub beta: f64,
    /// Initial step size of the backtracking line search.
    pub lr: f64,
    /// Full-batch proximal steps.
    pub epochs: usize,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.007,
            gamma: 0.5,
            beta: 2.0,
            lr: 1.0,
            epochs: 200,
        }
    }
}

impl HeadTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument("beta must be >= 0".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Training data for the head: CAV rows, g rows and labels.
#[derive(Debug, Clone, Copy)]
pub struct HeadData<'a> {
    pub z: ArrayView2<'a, f64>,
    pub g: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl HeadData<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.z.nrows();
        if self.g.nrows() != n || self.labels.len() != n {
            return Err(Error::validation(
                "head_data",
                format!(
                    "z has {n} rows, g {} rows, {} labels",
                    self.g.nrows(),
                    self.labels.len()
                ),
            ));
        }
        if n < self.n_classes {
            return Err(Error::InvalidArgument(format!(
                "need at least as many samples ({n}) as classes ({})",
                self.n_classes
            )));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(Error::Index {
                index: y,
                bound: self.n_classes,
            });
        }
        Ok(())
    }
}

/// Mean cross-entropy and the residual `P - Y` (softmax minus one-hot).
fn cross_entropy(data: &HeadData<'_>, head: &SparseHead) -> (f64, Array2<f64>) {
    let mut o = head.logits(data.z, data.g);
    let n = o.nrows();
    let mut loss = 0.0;
    for (mut row, &y) in o.outer_iter_mut().zip(data.labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        loss += s.ln() + m - (row[y].ln() + m);
        row.mapv_inplace(|v| v / s);
        row[y] -= 1.0;
    }
    (loss / n as f64, o)
}

/// Cross-entropy plus the L2 part of the penalty (the differentiable part).
pub fn smooth_objective(data: &HeadData<'_>, head: &SparseHead, lambda: f64, gamma: f64) -> f64 {
    let (ce, _) = cross_entropy(data, head);
    let sq: f64 = head.w1.iter().map(|w| w * w).sum();
    ce + lambda * (1.0 - gamma) * 0.5 * sq
}

/// Full training objective: cross-entropy plus elastic-net penalty on `W1`.
pub fn objective(data: &HeadData<'_>, head: &SparseHead, lambda: f64, gamma: f64) -> f64 {
    let (ce, _) = cross_entropy(data, head);
    ce + elastic_net_penalty(head.w1.view(), lambda, gamma)
}

/// Gradient of [`smooth_objective`] as `(dW1, dW2, db)`.
pub fn smooth_gradient(
    data: &HeadData<'_>,
    head: &SparseHead,
    lambda: f64,
    gamma: f64,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let (_, resid) = cross_entropy(data, head);
    let inv_n = 1.0 / data.z.nrows() as f64;
    let mut gw1 = data.z.t().dot(&resid) * inv_n;
    gw1.scaled_add(lambda * (1.0 - gamma), &head.w1);
    let gw2 = data.g.t().dot(&resid) * inv_n;
    let gb = resid.sum_axis(Axis(0)) * inv_n;
    (gw1, gw2, gb)
}

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// One accepted proximal step, reported to training observers.
pub struct ProxStep<'a> {
    pub epoch: usize,
    /// `W1` after the gradient step, before soft-thresholding.
    pub pre: &'a Array2<f64>,
    /// `W1` after soft-thresholding.
    pub post: &'a Array2<f64>,
    /// Soft-threshold level `step · λ · γ`.
    pub threshold: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadFit {
    pub head: SparseHead,
    /// Objective before training followed by one value per epoch.
    pub objectives: Vec<f64>,
}

const MIN_STEP: f64 = 1e-14;

pub fn train_head(data: &HeadData<'_>, cfg: &HeadTrainConfig) -> Result<HeadFit> {
    train_head_with(data, cfg, None, &mut |_| {})
}

/// Proximal gradient descent with backtracking, optionally warm-started.
///
/// Each epoch is one full-batch step. The step starts at `min(lr, 2·t_prev)`
/// and is halved until the usual quadratic upper bound holds and the full
/// objective does not increase, so the recorded objective is monotone.
pub fn train_head_with(
    data: &HeadData<'_>,
    cfg: &HeadTrainConfig,
    init: Option<SparseHead>,
    observer: &mut dyn FnMut(&ProxStep<'_>),
) -> Result<HeadFit> {
    cfg.validate()?;
    data.validate()?;
    let (d_c, d_f, l) = (data.z.ncols(), data.g.ncols(), data.n_classes);
    let mut head = match init {
        Some(h) => {
            if h.w1.dim() != (d_c, l) || h.w2.dim() != (d_f, l) {
                return Err(Error::Compatibility(format!(
                    "warm-start head has W1 {:?}, W2 {:?}; data needs ({d_c}, {l}), ({d_f}, {l})",
                    h.w1.dim(),
                    h.w2.dim()
                )));
            }
            h
        }
        None => SparseHead::zeros(d_c, d_f, l),
    };
    head.lambda = cfg.lambda;
    head.gamma = cfg.gamma;
    let (lambda, gamma) = (cfg.lambda, cfg.gamma);

    let mut current = objective(data, &head, lambda, gamma);
    if !current.is_finite() {
        return Err(Error::Divergence { epoch: 0, lr: cfg.lr });
    }
    let mut objectives = vec![current];
    let mut step = cfg.lr;

    for epoch in 1..=cfg.epochs {
        let smooth = smooth_objective(data, &head, lambda, gamma);
        let (gw1, gw2, gb) = smooth_gradient(data, &head, lambda, gamma);
        let mut t = (2.0 * step).min(cfg.lr);
        let accepted = loop {
            let mut pre = head.w1.clone();
            pre.scaled_add(-t, &gw1);
            let tau = t * lambda * gamma;
            let post = pre.mapv(|v| soft_threshold(v, tau));
            let mut cand = head.clone();
            cand.w1 = post;
            cand.w2.scaled_add(-t, &gw2);
            cand.b.scaled_add(-t, &gb);

            let mut lin = 0.0;
            let mut sq = 0.0;
            for (g, d) in [(&gw1, &cand.w1 - &head.w1), (&gw2, &cand.w2 - &head.w2)] {
                Zip::from(g).and(&d).for_each(|a, b| {
                    lin += a * b;
                    sq += b * b;
                });
            }
            let db = &cand.b - &head.b;
            lin += gb.dot(&db);
            sq += db.dot(&db);

            let cand_smooth = smooth_objective(data, &cand, lambda, gamma);
            let cand_obj = objective(data, &cand, lambda, gamma);
            if !cand_obj.is_finite() && t <= MIN_STEP {
                return Err(Error::Divergence { epoch, lr: t });
            }
            let bound_ok = cand_smooth <= smooth + lin + sq / (2.0 * t) + 1e-12 * smooth.abs();
            if cand_obj.is_finite() && bound_ok && cand_obj <= current {
                observer(&ProxStep {
                    epoch,
                    pre: &pre,
                    post: &cand.w1,
                    threshold: tau,
                    step: t,
                });
                break Some((cand, cand_obj, t));
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((cand, obj, t)) => {
                head = cand;
                current = obj;
                step = t;
            }
            None => log::debug!("head epoch {epoch}: no decreasing step found, holding"),
        }
        objectives.push(current);
    }

    Ok(HeadFit { head, objectives })
}

/// Percentage of rows whose prediction matches the label.
pub fn accuracy(z: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>, labels: &[usize], head: &SparseHead) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let preds = head.predict_batch(z, g);
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    100.0 * hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn bias_only_head() {
        let mut h = SparseHead::zeros(2, 2, 2);
        h.b = arr1(&[0.1, 0.2]);
        let o = head_forward(&[0.3, 0.4], &[1.0, -1.0], &h).unwrap();
        assert_eq!(o, vec![0.1, 0.2]);
        assert_eq!(predict(&[0.3, 0.4], &[1.0, -1.0], &h).unwrap(), 1);
        assert_eq!(head_forward(&[0.0, 0.0], &[0.0, 0.0], &h).unwrap(), vec![0.1, 0.2]);
    }

    #[test]
    fn forward_matches_hand_arithmetic() {
        let h = SparseHead {
            w1: arr2(&[[1.0, 2.0], [0.5, -1.0], [0.0, 3.0]]),
            w2: arr2(&[[2.0, 0.0], [-1.0, 1.0]]),
            b: arr1(&[0.25, -0.5]),
            lambda: 0.0,
            gamma: 0.0,
            config_hash: None,
        };
        // z = (1, 2, 0.5), g = (0.5, 1)
        // class 0: 1 + 1 + 0 + 1 - 1 + 0.25 = 2.25
        // class 1: 2 - 2 + 1.5 + 0 + 1 - 0.5 = 2.0
        let o = head_forward(&[1.0, 2.0, 0.5], &[0.5, 1.0], &h).unwrap();
        assert_eq!(o, vec![2.25, 2.0]);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let h = SparseHead::zeros(2, 2, 2);
        assert!(matches!(
            head_forward(&[0.0], &[0.0, 0.0], &h),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn penalty_hand_values() {
        let w = arr2(&[[1.0, -2.0]]);
        assert_eq!(elastic_net_penalty(w.view(), 2.0, 1.0), 6.0);
        let w = arr2(&[[3.0], [4.0]]);
        assert_eq!(elastic_net_penalty(w.view(), 1.0, 0.0), 12.5);
    }

    #[test]
    fn contributions() {
        let mut h = SparseHead::zeros(2, 1, 2);
        assert_eq!(concept_contributions(&[0.5, 0.0], &h, 1).unwrap(), vec![0.0, 0.0]);
        h.w1 = arr2(&[[0.0, 2.0], [0.0, 7.0]]);
        assert_eq!(concept_contributions(&[0.5, 0.0], &h, 1).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(
            concept_contributions(&[0.5, 0.0], &h, 2),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn masking_zeroes_blocks() {
        let mut h = SparseHead::zeros(1, 1, 1);
        h.w1.fill(1.0);
        h.w2.fill(2.0);
        assert_eq!(h.masked(HeadMask::ConceptsOnly).w2[[0, 0]], 0.0);
        assert_eq!(h.masked(HeadMask::NonProtoOnly).w1[[0, 0]], 0.0);
        assert_eq!(h.masked(HeadMask::Full), h);
    }

    #[test]
    fn config_validation() {
        assert!(HeadTrainConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(HeadTrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(HeadTrainConfig::default().validate().is_ok());
    }

    #[test]
    fn too_few_samples_rejected() {
        let z = Array2::<f64>::zeros((1, 2));
        let g = Array2::<f64>::zeros((1, 1));
        let data = HeadData {
            z: z.view(),
            g: g.view(),
            labels: &[0],
            n_classes: 2,
        };
        assert!(train_head(&data, &HeadTrainConfig::default()).is_err());
    }
}
