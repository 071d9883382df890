//! Planted-concept generator used as ground truth for the whole pipeline.

use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PartFeatureDataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Rejection-sampling budget for placing a single planted mean.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Recovery of the planted structure is only expected when
/// `min_separation > 2 * noise_sigma`; this is not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_parts: usize,
    pub feat_dim: usize,
    pub samples_per_class: usize,
    /// Planted concepts per (class, part) cell.
    pub concepts_per_cell: usize,
    pub noise_sigma: f64,
    /// Minimum pairwise distance between the planted means of one cell.
    pub min_separation: f64,
    /// Norm of the per-class mean of the non-prototypical vector `g`.
    /// Zero makes `g` pure noise, i.e. carries no class signal.
    pub nonproto_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 5,
            n_parts: 4,
            feat_dim: 32,
            samples_per_class: 40,
            concepts_per_cell: 2,
            noise_sigma: 0.02,
            min_separation: 1.0,
            nonproto_scale: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `[L × K × G × d_f]`, unit-norm up to f32 rounding.
    pub planted_means: Array4<f32>,
    /// `[L × d_f]`, already multiplied by `nonproto_scale`.
    #[serde(with = "crate::linalg::rows")]
    pub nonproto_means: Array2<f32>,
    /// Planted concept index per `(sample, part)`, each `< G`.
    #[serde(with = "crate::linalg::rows")]
    pub assignment: Array2<usize>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Draws `count` unit vectors that are pairwise at least `min_sep` apart.
fn place_means(
    rng: &mut ChaCha8Rng,
    count: usize,
    dim: usize,
    min_sep: f64,
    what: &str,
) -> Result<Vec<Vec<f64>>> {
    let mut placed: Vec<Vec<f64>> = Vec::with_capacity(count);
    for idx in 0..count {
        let mut accepted = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let cand = unit_vector(rng, dim);
            if placed.iter().all(|m| linalg::dist(m, &cand) >= min_sep) {
                placed.push(cand);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Generation(format!(
                "could not place mean {idx} of {count} for {what} at separation {min_sep} \
                 in dimension {dim} after {MAX_PLACEMENT_ATTEMPTS} attempts; \
                 use fewer concepts per cell or a smaller min_separation"
            )));
        }
    }
    Ok(placed)
}

/// Samples a dataset whose part features are noisy copies of planted means
/// drawn on the unit sphere. Deterministic for a fixed `spec.seed`; samples
/// are laid out class by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(PartFeatureDataset, GroundTruth)> {
    let SyntheticSpec {
        n_classes: l,
        n_parts: k,
        feat_dim: d,
        samples_per_class: per,
        concepts_per_cell: g,
        ..
    } = *spec;
    if l == 0 || k == 0 || d == 0 || per == 0 || g == 0 {
        return Err(Error::InvalidArgument(
            "synthetic spec counts must all be >= 1".into(),
        ));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument("noise_sigma must be finite and >= 0".into()));
    }
    if !(spec.min_separation >= 0.0) {
        return Err(Error::InvalidArgument("min_separation must be >= 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise_sigma: {e}")))?;

    let mut planted = Array4::<f32>::zeros((l, k, g, d));
    for j in 0..l {
        for p in 0..k {
            let means = place_means(
                &mut rng,
                g,
                d,
                spec.min_separation,
                &format!("class {j}, part {p}"),
            )?;
            for (c, m) in means.iter().enumerate() {
                for (t, &v) in m.iter().enumerate() {
                    planted[[j, p, c, t]] = v as f32;
                }
            }
        }
    }
    let class_means = place_means(&mut rng, l, d, spec.min_separation, "non-prototypical means")?;
    let mut nonproto_means = Array2::<f32>::zeros((l, d));
    for (j, m) in class_means.iter().enumerate() {
        for (t, &v) in m.iter().enumerate() {
            nonproto_means[[j, t]] = (v * spec.nonproto_scale) as f32;
        }
    }

    let n = l * per;
    let mut parts = Array3::<f32>::zeros((n, k, d));
    let mut nonproto = Array2::<f32>::zeros((n, d));
    let mut assignment = Array2::<usize>::zeros((n, k));
    let mut labels = Vec::with_capacity(n);
    for j in 0..l {
        for s in 0..per {
            let i = j * per + s;
            labels.push(j);
            for p in 0..k {
                let c = rng.random_range(0..g);
                assignment[[i, p]] = c;
                for t in 0..d {
                    let base = f64::from(planted[[j, p, c, t]]);
                    parts[[i, p, t]] = (base + noise.sample(&mut rng)) as f32;
                }
            }
            for t in 0..d {
                let base = f64::from(nonproto_means[[j, t]]);
                nonproto[[i, t]] = (base + noise.sample(&mut rng)) as f32;
            }
        }
    }

    let ds = PartFeatureDataset::new(l, parts, nonproto, labels)?;
    Ok((
        ds,
        GroundTruth {
            planted_means: planted,
            nonproto_means,
            assignment,
        },
    ))
}
