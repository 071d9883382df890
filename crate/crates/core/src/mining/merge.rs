//! Ward merging of concept centroids.
//!
//! Each centroid enters as a cluster weighted by its `member_count`. The
//! merge height of clusters `a` and `b` is the Ward cost taken per unit of
//! the pair's mean weight, `2 sqrt(w_a w_b) / (w_a + w_b) * |μ_a - μ_b|`.
//! Two equally weighted clusters sit at their Euclidean distance, so the cut
//! lives on the same scale as the centroid distances it is a percentage of. Clusters are merged greedily (closest
//! pair first) while the closest pair is strictly below the cut height, so a
//! zero threshold never merges anything.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConceptBook, ConceptEntry};
use crate::error::{Error, Result};
use crate::linalg;

/// Which centroids may merge with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MergeLevel {
    /// Same class and part.
    Cell = 1,
    /// Same class, any part.
    Class = 2,
    /// Any pair.
    Global = 3,
}

impl TryFrom<u8> for MergeLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(MergeLevel::Cell),
            2 => Ok(MergeLevel::Class),
            3 => Ok(MergeLevel::Global),
            other => Err(format!("merge level must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<MergeLevel> for u8 {
    fn from(l: MergeLevel) -> u8 {
        l as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Cut height as a percentage of the largest pairwise centroid distance
    /// over the whole book.
    pub threshold_pct: f64,
    pub level: MergeLevel,
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.threshold_pct) {
            return Err(Error::InvalidArgument(format!(
                "threshold_pct must lie in [0, 100], got {}",
                self.threshold_pct
            )));
        }
        Ok(())
    }
}

pub fn ward_distance(wa: f64, ca: &[f64], wb: f64, cb: &[f64]) -> f64 {
    2.0 * (wa * wb).sqrt() / (wa + wb) * linalg::dist(ca, cb)
}

struct Cluster {
    weight: f64,
    centroid: Vec<f64>,
    /// Book positions of the merged entries, ascending.
    members: Vec<usize>,
}

fn max_pairwise_distance(book: &ConceptBook) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in book.entries.iter().enumerate() {
        for b in &book.entries[i + 1..] {
            best = best.max(linalg::dist(&a.centroid, &b.centroid));
        }
    }
    best
}

fn agglomerate(book: &ConceptBook, group: &[usize], cut: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = group
        .iter()
        .map(|&i| Cluster {
            weight: book.entries[i].member_count as f64,
            centroid: book.entries[i].centroid.clone(),
            members: vec![i],
        })
        .collect();
    let dist = |a: &Cluster, b: &Cluster| ward_distance(a.weight, &a.centroid, b.weight, &b.centroid);

    let n = clusters.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            d[a][b] = dist(&clusters[a], &clusters[b]);
        }
    }
    let mut alive = vec![true; n];

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in (0..n).filter(|&a| alive[a]) {
            for b in ((a + 1)..n).filter(|&b| alive[b]) {
                if best.is_none_or(|(_, _, v)| d[a][b] < v) {
                    best = Some((a, b, d[a][b]));
                }
            }
        }
        let Some((a, b, v)) = best else { break };
        if v >= cut {
            break;
        }
        let (wa, wb) = (clusters[a].weight, clusters[b].weight);
        let w = wa + wb;
        let merged: Vec<f64> = clusters[a]
            .centroid
            .iter()
            .zip(&clusters[b].centroid)
            .map(|(x, y)| (wa * x + wb * y) / w)
            .collect();
        let mut members = std::mem::take(&mut clusters[b].members);
        clusters[a].members.append(&mut members);
        clusters[a].members.sort_unstable();
        clusters[a].centroid = merged;
        clusters[a].weight = w;
        alive[b] = false;
        for o in (0..n).filter(|&o| alive[o] && o != a) {
            let v = dist(&clusters[a], &clusters[o]);
            if o < a {
                d[o][a] = v;
            } else {
                d[a][o] = v;
            }
        }
    }

    clusters
        .into_iter()
        .zip(alive)
        .filter_map(|(c, keep)| keep.then_some(c))
        .collect()
}

/// Compresses the book by Ward merging within the scope given by the level.
///
/// A merged entry takes the class and part of its largest contributor (the
/// earliest entry on ties), its centroid is the member-count weighted mean
/// and local ids are renumbered per (class, part). Entries that do not merge
/// keep their centroid bit for bit.
pub fn merge_centroids(book: &ConceptBook, cfg: &MergeConfig) -> Result<ConceptBook> {
    cfg.validate()?;
    if cfg.threshold_pct == 0.0 || book.d_c() < 2 {
        return Ok(book.clone());
    }
    let cut = cfg.threshold_pct / 100.0 * max_pairwise_distance(book);

    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, e) in book.entries.iter().enumerate() {
        let key = match cfg.level {
            MergeLevel::Cell => (e.class, e.part),
            MergeLevel::Class => (e.class, 0),
            MergeLevel::Global => (0, 0),
        };
        groups.entry(key).or_default().push(i);
    }

    // (class, part, first member, entry without local id)
    let mut out: Vec<(usize, usize, usize, ConceptEntry)> = Vec::new();
    for group in groups.values() {
        for c in agglomerate(book, group, cut) {
            let lead = c
                .members
                .iter()
                .copied()
                .max_by(|&x, &y| {
                    book.entries[x]
                        .member_count
                        .cmp(&book.entries[y].member_count)
                        .then(y.cmp(&x))
                })
                .expect("cluster has members");
            let (class, part) = (book.entries[lead].class, book.entries[lead].part);
            let member_count = c.members.iter().map(|&m| book.entries[m].member_count).sum();
            out.push((
                class,
                part,
                c.members[0],
                ConceptEntry {
                    class,
                    part,
                    local_id: 0,
                    member_count,
                    centroid: c.centroid,
                },
            ));
        }
    }
    out.sort_by_key(|&(class, part, first, _)| (class, part, first));

    let mut entries = Vec::with_capacity(out.len());
    let mut prev: Option<(usize, usize)> = None;
    let mut next_id = 0;
    for (class, part, _, mut e) in out {
        if prev != Some((class, part)) {
            prev = Some((class, part));
            next_id = 0;
        }
        e.local_id = next_id;
        next_id += 1;
        entries.push(e);
    }
    let mut merged = ConceptBook::new(book.feat_dim, entries)?;
    merged.config_hash = book.config_hash.clone();
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(class: usize, part: usize, local_id: usize, x: f64, y: f64) -> ConceptEntry {
        ConceptEntry {
            class,
            part,
            local_id,
            member_count: 1,
            centroid: vec![x, y],
        }
    }

    fn sample_book() -> ConceptBook {
        ConceptBook::new(
            2,
            vec![
                entry(0, 0, 0, 0.0, 0.0),
                entry(0, 0, 1, 0.1, 0.0),
                entry(0, 1, 0, 1.0, 0.0),
                entry(1, 0, 0, 0.0, 0.05),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_threshold_is_identity() {
        let book = sample_book();
        for level in [MergeLevel::Cell, MergeLevel::Class, MergeLevel::Global] {
            let out = merge_centroids(
                &book,
                &MergeConfig {
                    threshold_pct: 0.0,
                    level,
                },
            )
            .unwrap();
            assert_eq!(out, book);
        }
    }

    #[test]
    fn close_pair_in_cell_merges_to_weighted_mean() {
        // D_max = 1.0 (entries 0 and 2), cut at 20% = 0.2 > 0.1
        let book = sample_book();
        let out = merge_centroids(
            &book,
            &MergeConfig {
                threshold_pct: 20.0,
                level: MergeLevel::Cell,
            },
        )
        .unwrap();
        assert_eq!(out.d_c(), 3);
        let e = &out.entries[0];
        assert_eq!((e.class, e.part, e.local_id, e.member_count), (0, 0, 0, 2));
        assert!((e.centroid[0] - 0.05).abs() < 1e-15);
        assert_eq!(out.entries[1].centroid, vec![1.0, 0.0]);
    }

    #[test]
    fn weights_shift_merged_centroid() {
        let mut book = sample_book();
        book.entries[1].member_count = 3;
        // height 2*sqrt(1*3)/4*0.1 ≈ 0.087 < 0.2
        let out = merge_centroids(
            &book,
            &MergeConfig {
                threshold_pct: 20.0,
                level: MergeLevel::Cell,
            },
        )
        .unwrap();
        assert!((out.entries[0].centroid[0] - 0.075).abs() < 1e-15);
        assert_eq!(out.entries[0].member_count, 4);
    }

    #[test]
    fn global_level_crosses_classes() {
        let book = sample_book();
        let cfg = |level| MergeConfig {
            threshold_pct: 20.0,
            level,
        };
        let cell = merge_centroids(&book, &cfg(MergeLevel::Cell)).unwrap();
        let global = merge_centroids(&book, &cfg(MergeLevel::Global)).unwrap();
        assert!(global.d_c() < cell.d_c());
        assert_eq!(global.d_c(), 2);
    }

    #[test]
    fn single_entry_unchanged() {
        let book = ConceptBook::new(2, vec![entry(0, 0, 0, 1.0, 1.0)]).unwrap();
        let out = merge_centroids(
            &book,
            &MergeConfig {
                threshold_pct: 100.0,
                level: MergeLevel::Global,
            },
        )
        .unwrap();
        assert_eq!(out, book);
    }

    #[test]
    fn level_serializes_as_integer() {
        let cfg = MergeConfig {
            threshold_pct: 5.0,
            level: MergeLevel::Class,
        };
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(s, r#"{"threshold_pct":5.0,"level":2}"#);
        assert!(serde_json::from_str::<MergeConfig>(r#"{"threshold_pct":5.0,"level":4}"#).is_err());
    }

    #[test]
    fn rejects_out_of_range_threshold() {
        let cfg = MergeConfig {
            threshold_pct: 120.0,
            level: MergeLevel::Cell,
        };
        assert!(merge_centroids(&sample_book(), &cfg).is_err());
    }
}
