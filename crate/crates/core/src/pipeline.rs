//! The staged training run: prototype centers first, then alternating
//! concept mining and head training, then the metric suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cav::compute_cav_batch;
use crate::dataset::PartFeatureDataset;
use crate::error::{Error, Result};
use crate::head::{
    accuracy, train_head_with, HeadData, HeadFit, HeadMask, HeadTrainConfig, SparseHead,
};
use crate::mining::{merge_centroids, mine_concepts, ConceptBook, MergeConfig, MiningParams};
use crate::occlusion::{occlusion_eval, OcclusionConfig};
use crate::partproto::{fit_prototype_centers, McmConfig, PrototypeCenters};
use crate::xai::{consistency, faithfulness, sparseness, stability, MetricReport};

/// Everything a pipeline run depends on besides the data.
///
/// `seed` overrides the seeds of the sub-configs. The classification weight
/// is 0 while the centers are fitted and `head.beta` afterwards; `head.epochs`
/// is the total head epoch budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Head epochs between two mining passes.
    pub remine_interval: usize,
    pub faithfulness_n: Vec<usize>,
    /// Fold count for stability.
    pub stability_k: usize,
    pub mcm: McmConfig,
    pub mining: MiningParams,
    pub merge: Option<MergeConfig>,
    pub head: HeadTrainConfig,
    pub occlusion: OcclusionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            remine_interval: 5,
            faithfulness_n: vec![1, 2, 3, 4, 5],
            stability_k: 10,
            mcm: McmConfig::default(),
            mining: MiningParams::default(),
            merge: None,
            head: HeadTrainConfig::default(),
            occlusion: OcclusionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg.resolved())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copy with the top-level seed pushed into every sub-config.
    pub fn resolved(mut self) -> Self {
        self.mcm.seed = self.seed;
        self.occlusion.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.remine_interval == 0 {
            return Err(Error::Config("remine_interval must be >= 1".into()));
        }
        if self.stability_k < 2 {
            return Err(Error::Config("stability_k must be >= 2".into()));
        }
        if !(self.head.beta > 0.0) {
            return Err(Error::Config(
                "head.beta must be > 0 for the head-training stage".into(),
            ));
        }
        self.mcm.validate()?;
        self.mining.validate()?;
        if let Some(m) = &self.merge {
            m.validate()?;
        }
        self.head.validate()?;
        self.occlusion.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn config_hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(&self.clone().resolved())?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }

    /// Number of mining passes the schedule performs.
    pub fn mining_passes(&self) -> usize {
        self.head.epochs.div_ceil(self.remine_interval).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub centers: PrototypeCenters,
    pub book: ConceptBook,
    pub head: SparseHead,
    pub report: MetricReport,
    pub mining_passes: usize,
    /// Head objective after every epoch, across all passes.
    pub objectives: Vec<f64>,
    /// Center loss history of the first stage.
    pub center_losses: Vec<f64>,
}

/// Mines (and optionally merges) the concept book for `ds`.
pub fn build_book(
    ds: &PartFeatureDataset,
    mining: &MiningParams,
    merge: Option<&MergeConfig>,
) -> Result<ConceptBook> {
    let book = mine_concepts(ds, mining).map_err(Error::in_stage("mining"))?;
    match merge {
        Some(m) => merge_centroids(&book, m).map_err(Error::in_stage("merge")),
        None => Ok(book),
    }
}

/// Fits a head on the CAVs of `ds` under `book`, with the initial step
/// scaled by `cfg.beta` as in the pipeline's second stage.
pub fn train_on_book(
    ds: &PartFeatureDataset,
    book: &ConceptBook,
    cfg: &HeadTrainConfig,
    init: Option<SparseHead>,
) -> Result<HeadFit> {
    let cavs = compute_cav_batch(ds, book).map_err(Error::in_stage("cav"))?;
    let mut staged = cfg.clone();
    staged.lr = cfg.lr * cfg.beta;
    let data = HeadData {
        z: cavs.z.view(),
        g: cavs.g.view(),
        labels: ds.labels(),
        n_classes: ds.n_classes(),
    };
    train_head_with(&data, &staged, init, &mut |_| {}).map_err(Error::in_stage("head"))
}

/// Full metric suite for a trained head on `ds`.
pub fn evaluate(
    ds: &PartFeatureDataset,
    book: &ConceptBook,
    head: &SparseHead,
    cfg: &PipelineConfig,
) -> Result<MetricReport> {
    let cavs = compute_cav_batch(ds, book)?;
    if head.d_c() != book.d_c() || head.feat_dim() != ds.feat_dim() {
        return Err(Error::Compatibility(format!(
            "head expects d_c={}, d_f={}; book has d_c={}, data d_f={}",
            head.d_c(),
            head.feat_dim(),
            book.d_c(),
            ds.feat_dim()
        )));
    }
    let labels = ds.labels();
    let acc = |mask| accuracy(cavs.z.view(), cavs.g.view(), labels, &head.masked(mask));
    let faith: BTreeMap<usize, f64> = faithfulness(&cavs, labels, head, book, &cfg.faithfulness_n)?;
    let (intra, inter) = consistency(cavs.z.view(), labels)?;
    let sp = sparseness(cavs.z.view())?;
    let stab = if ds.class_counts().iter().all(|&c| c >= cfg.stability_k) {
        Some(stability(ds, cfg.stability_k, &cfg.mining, cfg.seed)?)
    } else {
        log::warn!(
            "stability skipped: some class has fewer than {} samples",
            cfg.stability_k
        );
        None
    };
    let occlusion = occlusion_eval(ds, head, book, &cfg.occlusion)?;
    let report = MetricReport {
        faithfulness: faith,
        stability: stab,
        consistency_intra: intra,
        consistency_inter: inter,
        sparseness: sp,
        accuracy: acc(HeadMask::Full),
        accuracy_concepts_only: acc(HeadMask::ConceptsOnly),
        accuracy_nonproto_only: acc(HeadMask::NonProtoOnly),
        d_c: book.d_c(),
        occlusion,
        seed: cfg.seed,
        config_hash: cfg.config_hash()?,
        config: serde_json::to_value(cfg.clone().resolved())?,
    };
    report.validate()?;
    Ok(report)
}

/// Runs the three stages and the metric suite. Deterministic for a fixed
/// config and dataset.
pub fn run_pipeline(ds: &PartFeatureDataset, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let cfg = cfg.clone().resolved();
    cfg.validate()?;
    let hash = cfg.config_hash()?;

    let fit = fit_prototype_centers(ds, &cfg.mcm).map_err(Error::in_stage("partproto"))?;
    let mut centers = fit.centers;
    centers.config_hash = Some(hash.clone());
    log::info!(
        "centers: loss {:.5} -> {:.5}",
        fit.initial_loss,
        fit.final_loss
    );

    let mut head_cfg = cfg.head.clone();
    let passes = cfg.mining_passes();
    let mut remaining = cfg.head.epochs;
    let mut book: Option<ConceptBook> = None;
    let mut head: Option<SparseHead> = None;
    let mut objectives = Vec::new();

    for pass in 0..passes {
        let fresh = build_book(ds, &cfg.mining, cfg.merge.as_ref())?;
        // keep the weights only when rows still mean the same concepts
        let init = match (&book, head.take()) {
            (Some(old), Some(h)) if *old == fresh => Some(h),
            _ => None,
        };
        let epochs = remaining.min(cfg.remine_interval);
        remaining -= epochs;
        head_cfg.epochs = epochs;
        let fitted = train_on_book(ds, &fresh, &head_cfg, init)?;
        objectives.extend_from_slice(&fitted.objectives[1..]);
        log::debug!(
            "pass {pass}: d_c={}, objective {:?}",
            fresh.d_c(),
            fitted.objectives.last()
        );
        head = Some(fitted.head);
        book = Some(fresh);
    }

    let mut book = book.expect("at least one mining pass");
    let mut head = head.expect("at least one mining pass");
    book.config_hash = Some(hash.clone());
    head.config_hash = Some(hash);
    let report = evaluate(ds, &book, &head, &cfg).map_err(Error::in_stage("metrics"))?;

    Ok(PipelineOutput {
        centers,
        book,
        head,
        report,
        mining_passes: passes,
        objectives,
        center_losses: fit.history,
    })
}
