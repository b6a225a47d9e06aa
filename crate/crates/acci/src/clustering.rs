//! Threshold-gated pair filtering and iterative cluster merging into
//! coreference chains.
//!
//! Pairs whose final score passes the gate are processed in descending score
//! order; two clusters merge when their cluster score (average or single
//! linkage over the available cross-cluster pair scores) exceeds
//! `tau_cluster`. Missing cross-pair scores count as 0 under average linkage.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed partition file: {0}")]
    Parse(String),
    #[error("pair {0} references unknown mention {1}")]
    UnknownMention(String, String),
}

/// A scored mention pair ready for clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_id: String,
    pub m1: String,
    pub m2: String,
    /// Final score: debiased `y`, or `p_f` in baseline mode.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    Average,
    Single,
}

/// One recorded merge, kept as provenance on the resulting cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeStep {
    pub pair_id: String,
    pub cluster_score: f64,
}

/// A clustering of mention ids into disjoint, jointly exhaustive clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub clusters: Vec<BTreeSet<String>>,
    /// Merge trace per cluster index (empty for untouched singletons).
    pub provenance: BTreeMap<usize, Vec<MergeStep>>,
}

impl Partition {
    pub fn from_clusters<I, C, S>(clusters: I) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Partition {
            clusters: clusters
                .into_iter()
                .map(|c| c.into_iter().map(Into::into).collect())
                .collect(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn singletons<I, S>(mentions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Partition {
            clusters: mentions
                .into_iter()
                .map(|m| BTreeSet::from([m.into()]))
                .collect(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn mention_count(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }

    pub fn all_mentions(&self) -> BTreeSet<&str> {
        self.clusters
            .iter()
            .flat_map(|c| c.iter().map(|s| s.as_str()))
            .collect()
    }

    /// Map mention id -> cluster index.
    pub fn membership(&self) -> BTreeMap<&str, usize> {
        let mut map = BTreeMap::new();
        for (i, c) in self.clusters.iter().enumerate() {
            for m in c {
                map.insert(m.as_str(), i);
            }
        }
        map
    }

    /// Disjointness and coverage check against a mention universe.
    pub fn is_valid_over<'a, I: IntoIterator<Item = &'a str>>(&self, universe: I) -> bool {
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            for m in c {
                if !seen.insert(m.as_str()) {
                    return false;
                }
            }
        }
        let universe: BTreeSet<&str> = universe.into_iter().collect();
        seen == universe
    }
}

/// Retain pairs with `score >= gate`, sorted descending by score with ties
/// broken by pair_id.
pub fn filter_likely_pairs(pairs: &[ScoredPair], gate: f64) -> Vec<ScoredPair> {
    let mut likely: Vec<ScoredPair> = pairs.iter().filter(|p| p.score >= gate).cloned().collect();
    likely.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.pair_id.cmp(&b.pair_id))
    });
    likely
}

/// Merge mentions into clusters by iterating the gated pairs.
///
/// `scored` supplies the score lookup for cluster-score computation and may
/// contain pairs below the gate; `likely` drives the merge order. Cross-pairs
/// absent from `scored` count as 0 in average mode and are skipped in single
/// mode.
pub fn cluster(
    mentions: &[String],
    likely: &[ScoredPair],
    scored: &[ScoredPair],
    tau_cluster: f64,
    link_mode: LinkMode,
) -> Partition {
    let index: BTreeMap<&str, usize> = mentions.iter().map(|m| m.as_str()).zip(0..).collect();
    let score_of: BTreeMap<(usize, usize), f64> = scored
        .iter()
        .filter_map(|p| {
            let a = *index.get(p.m1.as_str())?;
            let b = *index.get(p.m2.as_str())?;
            Some(((a.min(b), a.max(b)), p.score))
        })
        .collect();

    let mut cluster_of: Vec<usize> = (0..mentions.len()).collect();
    let mut members: Vec<Vec<usize>> = (0..mentions.len()).map(|i| vec![i]).collect();
    let mut trace: BTreeMap<usize, Vec<MergeStep>> = BTreeMap::new();

    for pair in likely {
        let (Some(&a), Some(&b)) = (index.get(pair.m1.as_str()), index.get(pair.m2.as_str()))
        else {
            continue;
        };
        let (ca, cb) = (cluster_of[a], cluster_of[b]);
        if ca == cb {
            continue;
        }
        let cluster_score = match link_mode {
            LinkMode::Average => {
                let mut total = 0.0;
                for &x in &members[ca] {
                    for &y in &members[cb] {
                        total += score_of
                            .get(&(x.min(y), x.max(y)))
                            .copied()
                            .unwrap_or(0.0);
                    }
                }
                total / (members[ca].len() * members[cb].len()) as f64
            }
            LinkMode::Single => {
                let mut best = f64::NEG_INFINITY;
                for &x in &members[ca] {
                    for &y in &members[cb] {
                        if let Some(&s) = score_of.get(&(x.min(y), x.max(y))) {
                            best = best.max(s);
                        }
                    }
                }
                best
            }
        };
        if cluster_score > tau_cluster {
            // merge cb into ca
            let moved = std::mem::take(&mut members[cb]);
            for &m in &moved {
                cluster_of[m] = ca;
            }
            members[ca].extend(moved);
            let mut steps = trace.remove(&cb).unwrap_or_default();
            trace.entry(ca).or_default().append(&mut steps);
            trace.entry(ca).or_default().push(MergeStep {
                pair_id: pair.pair_id.clone(),
                cluster_score,
            });
        }
    }

    let mut clusters = Vec::new();
    let mut provenance = BTreeMap::new();
    for (old_idx, m) in members.iter().enumerate() {
        if m.is_empty() {
            continue;
        }
        let set: BTreeSet<String> = m.iter().map(|&i| mentions[i].clone()).collect();
        if let Some(steps) = trace.get(&old_idx) {
            provenance.insert(clusters.len(), steps.clone());
        }
        clusters.push(set);
    }
    Partition { clusters, provenance }
}

/// True-positive mention counts over cluster-size thresholds.
///
/// For each threshold `k`, counts mentions in predicted clusters of size >= k
/// that fall inside the gold cluster with largest overlap with their
/// predicted cluster (ties broken by larger gold cluster, then first index).
pub fn tp_by_cluster_threshold(
    partition: &Partition,
    gold: &Partition,
    thresholds: &[usize],
) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(thresholds.len());
    for &k in thresholds {
        let mut tp = 0;
        for pred_cluster in partition.clusters.iter().filter(|c| c.len() >= k) {
            let mut best: Option<(usize, usize)> = None; // (overlap, gold idx)
            for (gi, g) in gold.clusters.iter().enumerate() {
                let overlap = pred_cluster.intersection(g).count();
                let better = match best {
                    None => overlap > 0,
                    Some((bo, bi)) => {
                        overlap > bo
                            || (overlap == bo
                                && overlap > 0
                                && gold.clusters[gi].len() > gold.clusters[bi].len())
                    }
                };
                if better {
                    best = Some((overlap, gi));
                }
            }
            if let Some((overlap, _)) = best {
                tp += overlap;
            }
        }
        out.push((k, tp));
    }
    out
}

/// Serialize a partition as `{"clusters":[[mention_id,...],...]}`.
pub fn write_partition_json<W: Write>(partition: &Partition, mut out: W) -> Result<(), ClusterError> {
    #[derive(Serialize)]
    struct Wire<'a> {
        clusters: Vec<&'a BTreeSet<String>>,
    }
    serde_json::to_writer(&mut out, &Wire { clusters: partition.clusters.iter().collect() })
        .map_err(|e| ClusterError::Parse(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_partition_json<R: std::io::Read>(reader: R) -> Result<Partition, ClusterError> {
    #[derive(Deserialize)]
    struct Wire {
        clusters: Vec<Vec<String>>,
    }
    let wire: Wire =
        serde_json::from_reader(reader).map_err(|e| ClusterError::Parse(e.to_string()))?;
    Ok(Partition::from_clusters(wire.clusters))
}

/// Key-file output: one tab-separated line per mention with document id,
/// sentence index, trigger span, and cluster id. Mentions missing from the
/// corpus get "-" placeholders for position columns.
pub fn write_key_file<W: Write>(
    partition: &Partition,
    corpus: &Corpus,
    mut out: W,
) -> Result<(), ClusterError> {
    for (idx, cluster) in partition.clusters.iter().enumerate() {
        for mention_id in cluster {
            match corpus.mention(mention_id) {
                Some(m) => writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    m.doc_id, m.sentence_idx, m.trigger_span.0, m.trigger_span.1, idx, mention_id
                )?,
                None => writeln!(out, "-\t-\t-\t-\t{idx}\t{mention_id}")?,
            }
        }
    }
    Ok(())
}

/// Read a key file back into a partition (only the cluster and mention_id
/// columns are used).
pub fn read_key_file<R: std::io::Read>(reader: R) -> Result<Partition, ClusterError> {
    let mut clusters: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(ClusterError::Parse(format!(
                "line {}: expected 6 tab-separated columns, got {}",
                i + 1,
                cols.len()
            )));
        }
        clusters
            .entry(cols[4].to_string())
            .or_default()
            .insert(cols[5].to_string());
    }
    Ok(Partition {
        clusters: clusters.into_values().collect(),
        provenance: BTreeMap::new(),
    })
}
