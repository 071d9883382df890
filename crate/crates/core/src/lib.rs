//! Concept mining over part-level features.
//!
//! The crate takes already-pooled part features (one vector per part and
//! sample, plus one non-prototypical vector) and builds an interpretable
//! classifier on top of them:
//!
//! 1. [`partproto`] learns one prototype center per part with the marginal
//!    cluster-center loss.
//! 2. [`mining`] clusters every (class, part) feature bag with DBSCAN and
//!    keeps the cluster centroids as the concept book; centroids can be
//!    compressed by Ward merging.
//! 3. [`cav`] encodes samples as clamped cosine similarities to every
//!    centroid and [`head`] fits an elastic-net regularized linear head.
//!
//! [`xai`] and [`occlusion`] score the resulting explanations, and
//! [`pipeline`] strings the stages together.

pub mod artifact;
pub mod cav;
pub mod dataset;
pub mod error;
pub mod head;
pub mod linalg;
pub mod mining;
pub mod occlusion;
pub mod partproto;
pub mod pipeline;
pub mod xai;

pub use cav::{compute_cav, compute_cav_batch, CavMatrix, ConceptActivationVector};
pub use dataset::{
    generate_synthetic, load_dataset, save_dataset, split_kfold, DatasetFormat, GroundTruth,
    PartFeatureDataset, SyntheticSpec,
};
pub use error::{Error, Result};
pub use head::{HeadTrainConfig, SparseHead};
pub use mining::{ConceptBook, ConceptEntry, DbscanParams, MergeConfig, MergeLevel};
pub use partproto::{McmConfig, PrototypeCenters};
pub use pipeline::{PipelineConfig, PipelineOutput};
pub use xai::MetricReport;
