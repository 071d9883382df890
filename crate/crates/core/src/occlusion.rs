//! Part-level occlusion: zero the part vectors behind the concepts that
//! drive the prediction and track how accuracy and F(3) degrade.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::cav::{compute_cav, compute_cav_batch};
use crate::dataset::PartFeatureDataset;
use crate::error::{Error, Result};
use crate::head::{self, accuracy, SparseHead};
use crate::mining::ConceptBook;
use crate::xai::faithfulness;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionConfig {
    /// Fractions of the K parts to occlude, ascending, each in `[0, 1]`.
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.1, 0.2, 0.3],
            seed: 0,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidArgument("occlusion fractions must lie in [0, 1]".into()));
        }
        if self.fractions.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("occlusion fractions must be ascending".into()));
        }
        Ok(())
    }
}

/// Number of parts to hide: `ceil(fraction · K)`, at least one when
/// `fraction > 0`.
pub fn occluded_part_count(fraction: f64, k: usize) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    // absorb representation error, e.g. 0.3 * 10 = 3.0000000000000004
    let raw = (fraction * k as f64 - 1e-9).ceil().max(1.0) as usize;
    raw.min(k)
}

/// Parts ordered by their strongest concept contribution to the predicted
/// class, strongest first (lower part index on ties). Parts without any
/// concept rank last.
pub fn rank_parts(
    parts: ArrayView2<'_, f32>,
    g: ArrayView1<'_, f32>,
    head: &SparseHead,
    book: &ConceptBook,
) -> Result<Vec<usize>> {
    let cav = compute_cav(parts, g, book)?;
    let pred = head::predict(&cav.z, &cav.g, head)?;
    let contrib = head::concept_contributions(&cav.z, head, pred)?;
    let k = parts.nrows();
    let mut score = vec![f64::NEG_INFINITY; k];
    for (e, c) in book.entries.iter().zip(&contrib) {
        score[e.part] = score[e.part].max(*c);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Copy of the sample's parts with the top-ranked parts zeroed. `g` is not
/// part of the returned value and is never modified.
pub fn occlude_sample(
    parts: ArrayView2<'_, f32>,
    g: ArrayView1<'_, f32>,
    head: &SparseHead,
    book: &ConceptBook,
    fraction: f64,
) -> Result<Array2<f32>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let mut out = parts.to_owned();
    let count = occluded_part_count(fraction, parts.nrows());
    if count == 0 {
        return Ok(out);
    }
    for &p in &rank_parts(parts, g, head, book)?[..count] {
        out.row_mut(p).fill(0.0);
    }
    Ok(out)
}

pub fn occlude_dataset(
    ds: &PartFeatureDataset,
    head: &SparseHead,
    book: &ConceptBook,
    fraction: f64,
) -> Result<PartFeatureDataset> {
    let mut parts = Array3::<f32>::zeros(ds.parts().dim());
    for i in 0..ds.n_samples() {
        let occluded = occlude_sample(ds.sample_parts(i), ds.nonproto_row(i), head, book, fraction)?;
        parts.index_axis_mut(Axis(0), i).assign(&occluded);
    }
    ds.with_parts(parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionPoint {
    pub fraction: f64,
    /// Accuracy in percent.
    pub accuracy: f64,
    /// F(3) on the occluded activations, percentage points.
    pub f3: f64,
}

/// Accuracy and F(3) for the clean data (fraction 0) and every configured
/// fraction. Parts are chosen from the clean response; CAVs and F(3) are
/// recomputed on the occluded features.
pub fn occlusion_eval(
    ds: &PartFeatureDataset,
    head: &SparseHead,
    book: &ConceptBook,
    cfg: &OcclusionConfig,
) -> Result<Vec<OcclusionPoint>> {
    cfg.validate()?;
    let mut fractions = cfg.fractions.clone();
    if fractions.first() != Some(&0.0) {
        fractions.insert(0, 0.0);
    }
    fractions.dedup();
    let mut curve = Vec::with_capacity(fractions.len());
    for fraction in fractions {
        let occluded = occlude_dataset(ds, head, book, fraction)?;
        let cavs = compute_cav_batch(&occluded, book)?;
        let acc = accuracy(cavs.z.view(), cavs.g.view(), ds.labels(), head);
        let f = faithfulness(&cavs, ds.labels(), head, book, &[3])?;
        curve.push(OcclusionPoint {
            fraction,
            accuracy: acc,
            f3: f[&3],
        });
    }
    Ok(curve)
}

pub fn write_curve_csv(curve: &[OcclusionPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "fraction,accuracy,F3")?;
    for p in curve {
        writeln!(f, "{},{:.4},{:.4}", p.fraction, p.accuracy, p.f3)?;
    }
    Ok(())
}

/// Two polylines (accuracy and F(3), both in percent) over the occlusion
/// fraction.
pub fn curve_svg(curve: &[OcclusionPoint]) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let max_x = curve.iter().map(|p| p.fraction).fold(0.0f64, f64::max).max(1e-9);
    let x = |f: f64| pad + (w - 2.0 * pad) * f / max_x;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v.clamp(0.0, 100.0) / 100.0;
    let line = |sel: &dyn Fn(&OcclusionPoint) -> f64| {
        curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.fraction), y(sel(p))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n  <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = h - pad,
        r = w - pad
    ));
    svg.push_str(&format!(
        "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n",
        line(&|p| p.accuracy)
    ));
    svg.push_str(&format!(
        "  <polyline fill=\"none\" stroke=\"darkorange\" stroke-width=\"2\" points=\"{}\"/>\n",
        line(&|p| p.f3)
    ));
    svg.push_str(&format!(
        "  <text x=\"{pad}\" y=\"20\" font-size=\"12\">accuracy (blue), F(3) (orange) vs occluded fraction (max {max_x})</text>\n"
    ));
    svg.push_str("</svg>\n");
    svg
}
