use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub class: usize,
    pub part: usize,
    pub local_id: usize,
    pub member_count: usize,
    pub centroid: Vec<f64>,
}

/// The concept vocabulary: one centroid per mined (class, part, cluster).
/// The flat concept index is the entry position, so `d_c = entries.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptBook {
    #[serde(rename = "d_f")]
    pub feat_dim: usize,
    pub entries: Vec<ConceptEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl ConceptBook {
    pub fn new(feat_dim: usize, entries: Vec<ConceptEntry>) -> Result<Self> {
        let book = Self {
            feat_dim,
            entries,
            config_hash: None,
        };
        book.validate()?;
        Ok(book)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (idx, e) in self.entries.iter().enumerate() {
            if !seen.insert((e.class, e.part, e.local_id)) {
                return Err(Error::validation(
                    "entries",
                    format!(
                        "duplicate (class, part, local_id) = ({}, {}, {}) at entry {idx}",
                        e.class, e.part, e.local_id
                    ),
                ));
            }
            if e.member_count == 0 {
                return Err(Error::validation(
                    "entries",
                    format!("entry {idx} has member_count 0"),
                ));
            }
            if e.centroid.len() != self.feat_dim {
                return Err(Error::validation(
                    "entries",
                    format!(
                        "entry {idx} centroid has length {}, expected d_f={}",
                        e.centroid.len(),
                        self.feat_dim
                    ),
                ));
            }
            if e.centroid.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(
                    "entries",
                    format!("entry {idx} centroid is not finite"),
                ));
            }
        }
        Ok(())
    }

    /// Number of concepts `d_c`.
    pub fn d_c(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest K compatible with the entries' part indices.
    pub fn min_parts(&self) -> usize {
        self.entries.iter().map(|e| e.part + 1).max().unwrap_or(0)
    }

    /// Entry counts per (class, part) cell, in `(class, part)` order.
    pub fn cell_sizes(&self) -> Vec<((usize, usize), usize)> {
        let mut out: Vec<((usize, usize), usize)> = Vec::new();
        for e in &self.entries {
            match out.iter_mut().find(|(k, _)| *k == (e.class, e.part)) {
                Some((_, c)) => *c += 1,
                None => out.push(((e.class, e.part), 1)),
            }
        }
        out.sort_by_key(|(k, _)| *k);
        out
    }

    /// Flat indices of the entries that belong to `(class, part)`.
    pub fn cell(&self, class: usize, part: usize) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.class == class && e.part == part)
            .map(|(i, _)| i)
            .collect()
    }
}
