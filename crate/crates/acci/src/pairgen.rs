//! Candidate mention-pair generation within topics/subtopics, heuristic
//! non-coreferent filtering, and trigger-match distribution statistics.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Mention};
use crate::lemma::{lemma, synonyms};

#[derive(Debug, Error)]
pub enum PairError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed pair record: {0}")]
    Parse(String),
    #[error("mention {0} not found in corpus")]
    UnknownMention(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairScope {
    Topic,
    Subtopic,
    /// Gold topic annotation (identical to `Topic` here; kept distinct so a
    /// predicted document clustering could substitute without an API change).
    GoldTopic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    LemmaOverlap,
    SynonymSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionPair {
    pub pair_id: String,
    /// Canonical order: m1 < m2 lexicographically by mention_id.
    pub m1: String,
    pub m2: String,
    /// 1 iff the mentions share a gold cluster.
    pub gold_label: u8,
    pub lexically_similar_trigger: bool,
}

pub fn pair_id(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

fn trigger_lemmas(corpus: &Corpus, m: &Mention) -> Vec<String> {
    let sentence = corpus
        .mention_sentence(m)
        .expect("validated corpus resolves all mentions");
    sentence[m.trigger_span.0..m.trigger_span.1]
        .iter()
        .map(|t| lemma(t))
        .collect()
}

/// Lexically similar = identical trigger lemma sequences.
pub fn lexically_similar(corpus: &Corpus, a: &Mention, b: &Mention) -> bool {
    trigger_lemmas(corpus, a) == trigger_lemmas(corpus, b)
}

/// All unordered mention pairs within each scope unit, in deterministic
/// order (units by key, pairs lexicographically by mention ids).
pub fn generate_pairs(corpus: &Corpus, scope: PairScope) -> Vec<MentionPair> {
    let unit_key = |m: &Mention| -> String {
        let doc = corpus.document(&m.doc_id).expect("validated corpus");
        match scope {
            PairScope::Topic | PairScope::GoldTopic => doc.topic_id.clone(),
            PairScope::Subtopic => format!("{}/{}", doc.topic_id, doc.subtopic_id),
        }
    };
    let mut units: BTreeMap<String, Vec<&Mention>> = BTreeMap::new();
    for m in &corpus.mentions {
        units.entry(unit_key(m)).or_default().push(m);
    }
    let mut pairs = Vec::new();
    for mentions in units.values_mut() {
        mentions.sort_by(|a, b| a.mention_id.cmp(&b.mention_id));
        for i in 0..mentions.len() {
            for j in (i + 1)..mentions.len() {
                let (a, b) = (mentions[i], mentions[j]);
                pairs.push(MentionPair {
                    pair_id: pair_id(&a.mention_id, &b.mention_id),
                    m1: a.mention_id.clone(),
                    m2: b.mention_id.clone(),
                    gold_label: u8::from(a.gold_cluster_id == b.gold_cluster_id),
                    lexically_similar_trigger: lexically_similar(corpus, a, b),
                });
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutcome {
    pub pairs: Vec<MentionPair>,
    /// Gold-coreferent pairs that the heuristic dropped; never silent.
    pub dropped_positives: usize,
}

/// FNV-1a; stable across platforms and releases, unlike the std hasher.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

// deterministic per-pair uniform in [0,1)
fn pair_uniform(pair_id: &str, seed: u64) -> f64 {
    let mut bytes = pair_id.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    (fnv1a(&bytes) >> 11) as f64 / (1u64 << 53) as f64
}

/// Retain pairs whose trigger lemmas match under `mode`, plus a seeded
/// `keep_nonmatch_rate` fraction of the rest. With `oracle` set, every
/// gold-coreferent pair is also retained (the oracle heuristic variant).
///
/// The keep decision is a pure function of (pair_id, seed), which makes the
/// filter idempotent for a fixed seed.
pub fn heuristic_filter(
    corpus: &Corpus,
    pairs: &[MentionPair],
    mode: FilterMode,
    keep_nonmatch_rate: f64,
    oracle: bool,
    seed: u64,
) -> FilterOutcome {
    let matches = |p: &MentionPair| -> bool {
        let a = corpus.mention(&p.m1).expect("pair references corpus mention");
        let b = corpus.mention(&p.m2).expect("pair references corpus mention");
        let la = trigger_lemmas(corpus, a);
        let lb = trigger_lemmas(corpus, b);
        match mode {
            FilterMode::LemmaOverlap => la.iter().any(|x| lb.contains(x)),
            FilterMode::SynonymSet => la
                .iter()
                .any(|x| lb.iter().any(|y| synonyms(x, y))),
        }
    };
    let mut kept = Vec::new();
    let mut dropped_positives = 0;
    for p in pairs {
        let keep = matches(p)
            || (oracle && p.gold_label == 1)
            || pair_uniform(&p.pair_id, seed) < keep_nonmatch_rate;
        if keep {
            kept.push(p.clone());
        } else if p.gold_label == 1 {
            dropped_positives += 1;
        }
    }
    FilterOutcome {
        pairs: kept,
        dropped_positives,
    }
}

/// 2x2 contingency over {coreferent, not} x {lexically similar, not} with
/// the phi coefficient. `phi` is None when a margin has zero variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerMatchStats {
    pub c_lexsim: usize,
    pub c_lexdiv: usize,
    pub nc_lexsim: usize,
    pub nc_lexdiv: usize,
    pub phi: Option<f64>,
    pub phi_undefined_reason: Option<String>,
}

pub fn trigger_match_stats(pairs: &[MentionPair]) -> TriggerMatchStats {
    let mut n = [[0usize; 2]; 2]; // [label][lexsim]
    for p in pairs {
        n[p.gold_label as usize][usize::from(p.lexically_similar_trigger)] += 1;
    }
    let (nc_lexdiv, nc_lexsim, c_lexdiv, c_lexsim) = (n[0][0], n[0][1], n[1][0], n[1][1]);
    let margins = [
        c_lexsim + c_lexdiv,
        nc_lexsim + nc_lexdiv,
        c_lexsim + nc_lexsim,
        c_lexdiv + nc_lexdiv,
    ];
    let (phi, reason) = if margins.iter().any(|&m| m == 0) {
        (
            None,
            Some("a contingency margin has zero variance".to_string()),
        )
    } else {
        let num = (c_lexsim * nc_lexdiv) as f64 - (c_lexdiv * nc_lexsim) as f64;
        let den: f64 = margins.iter().map(|&m| m as f64).product::<f64>().sqrt();
        (Some(num / den), None)
    };
    TriggerMatchStats {
        c_lexsim,
        c_lexdiv,
        nc_lexsim,
        nc_lexdiv,
        phi,
        phi_undefined_reason: reason,
    }
}

/// JSONL serialization: `{"pair_id","m1","m2","label","lexsim"}`.
pub fn write_pairs<W: Write>(pairs: &[MentionPair], mut out: W) -> Result<(), PairError> {
    #[derive(Serialize)]
    struct Wire<'a> {
        pair_id: &'a str,
        m1: &'a str,
        m2: &'a str,
        label: u8,
        lexsim: bool,
    }
    for p in pairs {
        serde_json::to_writer(
            &mut out,
            &Wire {
                pair_id: &p.pair_id,
                m1: &p.m1,
                m2: &p.m2,
                label: p.gold_label,
                lexsim: p.lexically_similar_trigger,
            },
        )
        .map_err(|e| PairError::Parse(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pairs<R: std::io::Read>(reader: R) -> Result<Vec<MentionPair>, PairError> {
    #[derive(Deserialize)]
    struct Wire {
        pair_id: String,
        m1: String,
        m2: String,
        label: u8,
        lexsim: bool,
    }
    let mut pairs = Vec::new();
    for (i, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let w: Wire = serde_json::from_str(&line)
            .map_err(|e| PairError::Parse(format!("line {}: {e}", i + 1)))?;
        pairs.push(MentionPair {
            pair_id: w.pair_id,
            m1: w.m1,
            m2: w.m2,
            gold_label: w.label,
            lexically_similar_trigger: w.lexsim,
        });
    }
    Ok(pairs)
}
