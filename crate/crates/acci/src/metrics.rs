//! Coreference evaluation: MUC, B³, CEAFe, LEA, and CoNLL F1.
//!
//! CEAFe's cluster alignment is solved exactly with an assignment algorithm,
//! never greedily. All metrics require gold and predicted partitions over the
//! same mention universe.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Partition;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("gold and predicted partitions cover different mention sets")]
    UniverseMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrF1 {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrF1 { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub muc: PrF1,
    pub b_cubed: PrF1,
    pub ceaf_e: PrF1,
    pub lea: PrF1,
    pub conll_f1: f64,
}

fn check_universe(gold: &Partition, pred: &Partition) -> Result<(), MetricError> {
    if gold.all_mentions() != pred.all_mentions() {
        return Err(MetricError::UniverseMismatch);
    }
    Ok(())
}

fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    if a.len() <= b.len() {
        a.iter().filter(|m| b.contains(*m)).count()
    } else {
        b.iter().filter(|m| a.contains(*m)).count()
    }
}

/// Link-based metric of Vilain et al.: recall counts the links preserved when
/// each gold chain is partitioned by the prediction.
pub fn muc(gold: &Partition, pred: &Partition) -> Result<PrF1, MetricError> {
    check_universe(gold, pred)?;
    Ok(PrF1::new(muc_one_way(pred, gold), muc_one_way(gold, pred)))
}

// sum over key clusters of (|k| - partitions(k, response)) / (|k| - 1)
fn muc_one_way(key: &Partition, response: &Partition) -> f64 {
    let membership = response.membership();
    let mut num = 0i64;
    let mut den = 0i64;
    for k in &key.clusters {
        let parts: BTreeSet<usize> = k.iter().map(|m| membership[m.as_str()]).collect();
        num += k.len() as i64 - parts.len() as i64;
        den += k.len() as i64 - 1;
    }
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Mention-based metric of Bagga & Baldwin.
pub fn b_cubed(gold: &Partition, pred: &Partition) -> Result<PrF1, MetricError> {
    check_universe(gold, pred)?;
    Ok(PrF1::new(b_cubed_one_way(gold, pred), b_cubed_one_way(pred, gold)))
}

// mean over mentions of |key_cluster ∩ response_cluster| / |response_cluster|
fn b_cubed_one_way(key: &Partition, response: &Partition) -> f64 {
    let key_membership = key.membership();
    let mut total = 0.0;
    let mut n = 0usize;
    for r in &response.clusters {
        for m in r {
            let k = &key.clusters[key_membership[m.as_str()]];
            total += overlap(k, r) as f64 / r.len() as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

fn phi4(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    2.0 * overlap(a, b) as f64 / (a.len() + b.len()) as f64
}

/// Entity-based metric of Luo (phi4 similarity), with the optimal one-to-one
/// cluster alignment found by maximum-weight bipartite matching.
pub fn ceaf_e(gold: &Partition, pred: &Partition) -> Result<PrF1, MetricError> {
    check_universe(gold, pred)?;
    if gold.clusters.is_empty() && pred.clusters.is_empty() {
        return Ok(PrF1::new(0.0, 0.0));
    }
    let weights: Vec<Vec<f64>> = pred
        .clusters
        .iter()
        .map(|p| gold.clusters.iter().map(|g| phi4(p, g)).collect())
        .collect();
    let total = max_weight_assignment(&weights);
    let precision = if pred.clusters.is_empty() { 0.0 } else { total / pred.clusters.len() as f64 };
    let recall = if gold.clusters.is_empty() { 0.0 } else { total / gold.clusters.len() as f64 };
    Ok(PrF1::new(precision, recall))
}

/// Maximum total weight of a one-to-one assignment between rows and columns
/// of a rectangular nonnegative weight matrix.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    if rows == 0 {
        return 0.0;
    }
    let cols = weights[0].len();
    if cols == 0 {
        return 0.0;
    }
    let n = rows.max(cols);
    // Pad to square and negate: minimum-cost assignment on -w.
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };

    // Hungarian algorithm with potentials, O(n^3). 1-indexed internals.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        let i = matched_row[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            total += weights[i - 1][j - 1];
        }
    }
    total
}

/// Link-based entity-aware metric of Moosavi & Strube. Singletons carry
/// importance 1 and resolve iff predicted as singletons (the published
/// self-link convention).
pub fn lea(gold: &Partition, pred: &Partition) -> Result<PrF1, MetricError> {
    check_universe(gold, pred)?;
    Ok(PrF1::new(lea_one_way(pred, gold), lea_one_way(gold, pred)))
}

fn links(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

// sum over key entities of |k| * resolution(k) / sum |k|
fn lea_one_way(key: &Partition, response: &Partition) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in &key.clusters {
        den += k.len() as f64;
        let resolution = if k.len() == 1 {
            // self-link convention
            let m = k.iter().next().unwrap();
            let in_singleton = response
                .clusters
                .iter()
                .any(|r| r.len() == 1 && r.contains(m));
            if in_singleton {
                1.0
            } else {
                0.0
            }
        } else {
            let mut resolved = 0.0;
            for r in &response.clusters {
                resolved += links(overlap(k, r));
            }
            resolved / links(k.len())
        };
        num += k.len() as f64 * resolution;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Arithmetic mean of the MUC, B³, and CEAFe F1 values.
pub fn conll_f1(muc_f1: f64, b_cubed_f1: f64, ceaf_e_f1: f64) -> f64 {
    (muc_f1 + b_cubed_f1 + ceaf_e_f1) / 3.0
}

/// Round to one decimal, the convention used in results tables.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Full evaluation of a predicted partition against gold.
pub fn evaluate(gold: &Partition, pred: &Partition) -> Result<MetricReport, MetricError> {
    let muc = muc(gold, pred)?;
    let b_cubed = b_cubed(gold, pred)?;
    let ceaf_e = ceaf_e(gold, pred)?;
    let lea = lea(gold, pred)?;
    Ok(MetricReport {
        muc,
        b_cubed,
        ceaf_e,
        lea,
        conll_f1: conll_f1(muc.f1, b_cubed.f1, ceaf_e.f1),
    })
}

/// Aligned text table at 4-decimal precision.
pub fn format_report(report: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str("metric     P        R        F1\n");
    for (name, m) in [
        ("MUC", report.muc),
        ("B3", report.b_cubed),
        ("CEAFe", report.ceaf_e),
        ("LEA", report.lea),
    ] {
        out.push_str(&format!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4}\n",
            name, m.precision, m.recall, m.f1
        ));
    }
    out.push_str(&format!("CoNLL F1 {:>26.4}\n", report.conll_f1));
    out
}
