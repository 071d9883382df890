//! Part-feature datasets: the in-memory type, file formats, the planted
//! synthetic generator and stratified fold splitting.

mod io;
mod split;
mod synthetic;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub use io::{load_dataset, load_dataset_with, save_dataset, DatasetFormat, PFD_MAGIC};
pub use split::split_kfold;
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticSpec, MAX_PLACEMENT_ATTEMPTS};

/// `n_samples` samples, each with `K` part vectors and one non-prototypical
/// vector `g`, all of dimension `d_f`, plus a class label in `[0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartFeatureDataset {
    n_classes: usize,
    parts: Array3<f32>,
    nonproto: Array2<f32>,
    labels: Vec<usize>,
}

impl PartFeatureDataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(
        n_classes: usize,
        parts: Array3<f32>,
        nonproto: Array2<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let ds = Self {
            n_classes,
            parts,
            nonproto,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k, d) = self.parts.dim();
        if self.n_classes == 0 {
            return Err(Error::validation("n_classes", "must be at least 1"));
        }
        if k == 0 {
            return Err(Error::validation("n_parts", "must be at least 1"));
        }
        if d == 0 {
            return Err(Error::validation("feat_dim", "must be at least 1"));
        }
        if self.nonproto.dim() != (n, d) {
            return Err(Error::validation(
                "nonproto_features",
                format!(
                    "shape {:?} does not match n_samples={n}, feat_dim={d}",
                    self.nonproto.dim()
                ),
            ));
        }
        if self.labels.len() != n {
            return Err(Error::validation(
                "labels",
                format!("{} labels for {n} samples", self.labels.len()),
            ));
        }
        for (i, &y) in self.labels.iter().enumerate() {
            if y >= self.n_classes {
                return Err(Error::validation(
                    "labels",
                    format!("sample {i} has label {y} >= n_classes {}", self.n_classes),
                ));
            }
        }
        for i in 0..n {
            let finite_parts = self.parts.index_axis(Axis(0), i).iter().all(|v| v.is_finite());
            let finite_g = self.nonproto.row(i).iter().all(|v| v.is_finite());
            if !finite_parts || !finite_g {
                return Err(Error::validation(
                    "features",
                    format!("sample {i} contains a non-finite value"),
                ));
            }
        }
        let counts = self.class_counts();
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::validation(
                "labels",
                format!("class {empty} has no samples"),
            ));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.parts.dim().0
    }

    pub fn n_parts(&self) -> usize {
        self.parts.dim().1
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feat_dim(&self) -> usize {
        self.parts.dim().2
    }

    pub fn parts(&self) -> &Array3<f32> {
        &self.parts
    }

    pub fn nonproto(&self) -> &Array2<f32> {
        &self.nonproto
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Part vectors of sample `i` as a `[K × d_f]` view.
    pub fn sample_parts(&self, i: usize) -> ArrayView2<'_, f32> {
        self.parts.index_axis(Axis(0), i)
    }

    pub fn part(&self, i: usize, p: usize) -> ArrayView1<'_, f32> {
        self.parts.index_axis(Axis(0), i).index_axis_move(Axis(0), p)
    }

    pub fn nonproto_row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.nonproto.row(i)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            if y < self.n_classes {
                counts[y] += 1;
            }
        }
        counts
    }

    /// Indices of the samples of class `j`, ascending.
    pub fn class_indices(&self, j: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == j)
            .map(|(i, _)| i)
            .collect()
    }

    /// Restricts the dataset to `indices` (in the given order). The class
    /// count is preserved, so every class must still be represented.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_samples()) {
            return Err(Error::Index {
                index: bad,
                bound: self.n_samples(),
            });
        }
        Self::new(
            self.n_classes,
            self.parts.select(Axis(0), indices),
            self.nonproto.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Copy with the part vectors replaced; shapes must match.
    pub fn with_parts(&self, parts: Array3<f32>) -> Result<Self> {
        if parts.dim() != self.parts.dim() {
            return Err(Error::validation(
                "part_features",
                format!("shape {:?} != {:?}", parts.dim(), self.parts.dim()),
            ));
        }
        Self::new(
            self.n_classes,
            parts,
            self.nonproto.clone(),
            self.labels.clone(),
        )
    }

    /// Copy with the non-prototypical vectors replaced; shapes must match.
    pub fn with_nonproto(&self, nonproto: Array2<f32>) -> Result<Self> {
        Self::new(
            self.n_classes,
            self.parts.clone(),
            nonproto,
            self.labels.clone(),
        )
    }
}
