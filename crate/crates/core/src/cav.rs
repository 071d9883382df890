//! Concept activation vectors: clamped cosine similarity between each part
//! feature and every centroid of the book that belongs to that part.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::dataset::PartFeatureDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mining::ConceptBook;

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptActivationVector {
    /// One activation per book entry, each in `[0, 1]`.
    pub z: Vec<f64>,
    /// Non-prototypical features, passed through unchanged.
    pub g: Vec<f64>,
}

/// Row-aligned CAVs and non-prototypical features for a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CavMatrix {
    /// `[n_samples × d_c]`
    pub z: Array2<f64>,
    /// `[n_samples × d_f]`
    pub g: Array2<f64>,
}

fn check_dims(k: usize, d: usize, g_len: usize, book: &ConceptBook) -> Result<()> {
    if d != book.feat_dim || g_len != book.feat_dim {
        return Err(Error::validation(
            "feat_dim",
            format!(
                "sample d_f={d} (g: {g_len}) does not match book d_f={}",
                book.feat_dim
            ),
        ));
    }
    if book.min_parts() > k {
        return Err(Error::validation(
            "n_parts",
            format!(
                "book references part {} but sample has only {k} parts",
                book.min_parts() - 1
            ),
        ));
    }
    Ok(())
}

fn activations(parts: &[Vec<f64>], book: &ConceptBook) -> Vec<f64> {
    book.entries
        .iter()
        .map(|e| linalg::cosine(&parts[e.part], &e.centroid).max(0.0))
        .collect()
}

/// CAV of one sample given its `[K × d_f]` part features and `g`.
pub fn compute_cav(
    parts: ArrayView2<'_, f32>,
    g: ArrayView1<'_, f32>,
    book: &ConceptBook,
) -> Result<ConceptActivationVector> {
    let (k, d) = parts.dim();
    check_dims(k, d, g.len(), book)?;
    let rows: Vec<Vec<f64>> = parts
        .outer_iter()
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect();
    Ok(ConceptActivationVector {
        z: activations(&rows, book),
        g: g.iter().map(|&v| f64::from(v)).collect(),
    })
}

pub fn compute_cav_batch(ds: &PartFeatureDataset, book: &ConceptBook) -> Result<CavMatrix> {
    check_dims(ds.n_parts(), ds.feat_dim(), ds.feat_dim(), book)?;
    let n = ds.n_samples();
    let mut z = Array2::<f64>::zeros((n, book.d_c()));
    for i in 0..n {
        let cav = compute_cav(ds.sample_parts(i), ds.nonproto_row(i), book)?;
        z.row_mut(i).assign(&ArrayView1::from(&cav.z));
    }
    Ok(CavMatrix {
        z,
        g: ds.nonproto().mapv(f64::from),
    })
}

/// CSV with `z_0..z_{d_c-1}, g_0..g_{d_f-1}, label`, one row per sample.
pub fn write_cav_csv(cavs: &CavMatrix, labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let (n, dc) = cavs.z.dim();
    let df = cavs.g.ncols();
    if labels.len() != n || cavs.g.nrows() != n {
        return Err(Error::validation("labels", "row count mismatch"));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..dc)
        .map(|k| format!("z_{k}"))
        .chain((0..df).map(|k| format!("g_{k}")))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..n {
        let row: Vec<String> = cavs
            .z
            .row(i)
            .iter()
            .chain(cavs.g.row(i).iter())
            .map(|v| v.to_string())
            .chain(std::iter::once(labels[i].to_string()))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
