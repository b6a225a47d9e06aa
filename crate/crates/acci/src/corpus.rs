//! Canonical corpus data model, JSONL ingestion/validation, and topic-based
//! splitting.
//!
//! The ingestion contract is line-delimited JSON with two record kinds
//! discriminated by `"kind"`:
//!
//! ```text
//! {"kind":"doc","doc_id":"d1","topic":"1","subtopic":"1a","sentences":[["A","hit","B"]]}
//! {"kind":"mention","mention_id":"m1","doc_id":"d1","sentence_idx":0,"trigger":[1,2],"cluster":"c1"}
//! ```
//!
//! Unknown fields are ignored; `"args"` is optional. Converters from
//! dataset-specific formats (ECB+ XML, GVC) live outside this crate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: mention {mention_id} references unknown doc_id {doc_id}")]
    DanglingDoc {
        line: usize,
        mention_id: String,
        doc_id: String,
    },
    #[error("corpus invariant violated: {0}")]
    Invalid(String),
    #[error("split assignment does not cover topic {0}")]
    UncoveredTopic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgRole {
    Time,
    Location,
    Participant,
    Other,
}

/// A `[start, end)` token interval with a role tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpan {
    pub role: ArgRole,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub topic_id: String,
    pub subtopic_id: String,
    /// Tokenized sentences; a token is a whitespace-delimited surface string.
    pub sentences: Vec<Vec<String>>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    pub doc_id: String,
    pub sentence_idx: usize,
    /// `[start, end)` token interval of the trigger within the sentence.
    pub trigger_span: (usize, usize),
    pub gold_cluster_id: String,
    /// Optional argument annotation. When absent, argument context is all
    /// sentence tokens outside the trigger span.
    pub argument_spans: Option<Vec<ArgSpan>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub mentions: Vec<Mention>,
    pub split: Split,
}

/// A broken invariant, reported as data rather than an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Id of the offending document or mention.
    pub entity: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

// Wire records. Field names are the external schema, not the in-memory names.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Doc {
        doc_id: String,
        topic: String,
        subtopic: String,
        sentences: Vec<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source: Option<String>,
    },
    Mention {
        mention_id: String,
        doc_id: String,
        sentence_idx: usize,
        trigger: (usize, usize),
        cluster: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        args: Option<Vec<ArgRecord>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ArgRecord {
    role: ArgRole,
    span: (usize, usize),
}

impl Corpus {
    pub fn new(documents: Vec<Document>, mentions: Vec<Mention>, split: Split) -> Self {
        Corpus {
            documents,
            mentions,
            split,
        }
    }

    pub fn empty(split: Split) -> Self {
        Corpus::new(Vec::new(), Vec::new(), split)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn mention(&self, mention_id: &str) -> Option<&Mention> {
        self.mentions.iter().find(|m| m.mention_id == mention_id)
    }

    /// Sentence tokens of a mention.
    pub fn mention_sentence(&self, m: &Mention) -> Option<&[String]> {
        self.document(&m.doc_id)
            .and_then(|d| d.sentences.get(m.sentence_idx))
            .map(|s| s.as_slice())
    }

    /// Distinct gold cluster ids, in first-seen order.
    pub fn gold_cluster_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for m in &self.mentions {
            if seen.insert(m.gold_cluster_id.as_str()) {
                out.push(m.gold_cluster_id.as_str());
            }
        }
        out
    }
}

/// Parse a corpus file, validating all type invariants.
pub fn parse_corpus(path: &Path, split: Split) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_corpus_reader(BufReader::new(file), split)
}

pub fn parse_corpus_reader<R: Read>(reader: R, split: Split) -> Result<Corpus, CorpusError> {
    let mut documents = Vec::new();
    let mut mentions: Vec<(usize, Mention)> = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        match record {
            Record::Doc {
                doc_id,
                topic,
                subtopic,
                sentences,
                source,
            } => documents.push(Document {
                doc_id,
                topic_id: topic,
                subtopic_id: subtopic,
                sentences,
                source,
            }),
            Record::Mention {
                mention_id,
                doc_id,
                sentence_idx,
                trigger,
                cluster,
                args,
            } => mentions.push((
                lineno,
                Mention {
                    mention_id,
                    doc_id,
                    sentence_idx,
                    trigger_span: trigger,
                    gold_cluster_id: cluster,
                    argument_spans: args
                        .map(|v| v.into_iter().map(|a| ArgSpan { role: a.role, span: a.span }).collect()),
                },
            )),
        }
    }

    let doc_ids: BTreeSet<&str> = documents.iter().map(|d| d.doc_id.as_str()).collect();
    for (lineno, m) in &mentions {
        if !doc_ids.contains(m.doc_id.as_str()) {
            return Err(CorpusError::DanglingDoc {
                line: *lineno,
                mention_id: m.mention_id.clone(),
                doc_id: m.doc_id.clone(),
            });
        }
    }

    let corpus = Corpus::new(documents, mentions.into_iter().map(|(_, m)| m).collect(), split);
    let violations = validate_corpus(&corpus);
    if let Some(v) = violations.first() {
        return Err(CorpusError::Invalid(format!("{}: {}", v.entity, v.rule)));
    }
    Ok(corpus)
}

/// Write a corpus in the canonical JSONL format (documents first, then
/// mentions, both in stored order).
pub fn serialize_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    for d in &corpus.documents {
        let record = Record::Doc {
            doc_id: d.doc_id.clone(),
            topic: d.topic_id.clone(),
            subtopic: d.subtopic_id.clone(),
            sentences: d.sentences.clone(),
            source: d.source.clone(),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| CorpusError::Invalid(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    for m in &corpus.mentions {
        let record = Record::Mention {
            mention_id: m.mention_id.clone(),
            doc_id: m.doc_id.clone(),
            sentence_idx: m.sentence_idx,
            trigger: m.trigger_span,
            cluster: m.gold_cluster_id.clone(),
            args: m.argument_spans.as_ref().map(|v| {
                v.iter()
                    .map(|a| ArgRecord { role: a.role, span: a.span })
                    .collect()
            }),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| CorpusError::Invalid(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    serialize_corpus(corpus, std::io::BufWriter::new(file))
}

/// Check every type invariant; an empty list means the corpus is valid.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut doc_ids = BTreeSet::new();
    for d in &corpus.documents {
        if !doc_ids.insert(d.doc_id.as_str()) {
            violations.push(Violation::new(&d.doc_id, "duplicate doc_id"));
        }
        if d.topic_id.is_empty() {
            violations.push(Violation::new(&d.doc_id, "empty topic_id"));
        }
        for (i, s) in d.sentences.iter().enumerate() {
            if s.is_empty() {
                violations.push(Violation::new(&d.doc_id, format!("sentence {i} is empty")));
            }
        }
    }

    let mut mention_ids = BTreeSet::new();
    // topic of each gold cluster; gold clusters must not span topics
    let mut cluster_topic: BTreeMap<&str, &str> = BTreeMap::new();
    for m in &corpus.mentions {
        if !mention_ids.insert(m.mention_id.as_str()) {
            violations.push(Violation::new(&m.mention_id, "duplicate mention_id"));
        }
        let (start, end) = m.trigger_span;
        if start >= end {
            violations.push(Violation::new(
                &m.mention_id,
                format!("trigger_span [{start},{end}) has end <= start"),
            ));
        }
        match corpus.document(&m.doc_id) {
            None => violations.push(Violation::new(
                &m.mention_id,
                format!("references unknown doc_id {}", m.doc_id),
            )),
            Some(d) => {
                match d.sentences.get(m.sentence_idx) {
                    None => violations.push(Violation::new(
                        &m.mention_id,
                        format!("sentence_idx {} out of bounds", m.sentence_idx),
                    )),
                    Some(sentence) => {
                        if end > sentence.len() {
                            violations.push(Violation::new(
                                &m.mention_id,
                                format!(
                                    "trigger_span [{start},{end}) exceeds sentence length {}",
                                    sentence.len()
                                ),
                            ));
                        }
                        if let Some(args) = &m.argument_spans {
                            for a in args {
                                if a.span.0 >= a.span.1 || a.span.1 > sentence.len() {
                                    violations.push(Violation::new(
                                        &m.mention_id,
                                        format!("argument span [{},{}) invalid", a.span.0, a.span.1),
                                    ));
                                }
                            }
                        }
                    }
                }
                match cluster_topic.get(m.gold_cluster_id.as_str()) {
                    None => {
                        cluster_topic.insert(&m.gold_cluster_id, &d.topic_id);
                    }
                    Some(topic) if *topic != d.topic_id => {
                        violations.push(Violation::new(
                            &m.mention_id,
                            format!("gold cluster {} spans topics", m.gold_cluster_id),
                        ));
                    }
                    Some(_) => {}
                }
            }
        }
    }

    violations
}

/// Split a corpus by topic, consuming it into mention-disjoint train/dev/test
/// corpora. The assignment must cover every topic present.
pub fn split_by_topics(
    corpus: &Corpus,
    assignment: &BTreeMap<String, Split>,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    for d in &corpus.documents {
        if !assignment.contains_key(&d.topic_id) {
            return Err(CorpusError::UncoveredTopic(d.topic_id.clone()));
        }
    }
    let mut out = BTreeMap::from([
        (Split::Train, Corpus::empty(Split::Train)),
        (Split::Dev, Corpus::empty(Split::Dev)),
        (Split::Test, Corpus::empty(Split::Test)),
    ]);
    let doc_split: BTreeMap<&str, Split> = corpus
        .documents
        .iter()
        .map(|d| (d.doc_id.as_str(), assignment[&d.topic_id]))
        .collect();
    for d in &corpus.documents {
        out.get_mut(&doc_split[d.doc_id.as_str()])
            .unwrap()
            .documents
            .push(d.clone());
    }
    for m in &corpus.mentions {
        let split = doc_split
            .get(m.doc_id.as_str())
            .copied()
            .ok_or_else(|| CorpusError::Invalid(format!("mention {} has no document", m.mention_id)))?;
        out.get_mut(&split).unwrap().mentions.push(m.clone());
    }
    let train = out.remove(&Split::Train).unwrap();
    let dev = out.remove(&Split::Dev).unwrap();
    let test = out.remove(&Split::Test).unwrap();
    Ok((train, dev, test))
}

/// Summary counts used for dataset statistics tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub topics: usize,
    pub documents: usize,
    pub mentions: usize,
    pub clusters: usize,
    pub singletons: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let topics: BTreeSet<&str> = corpus.documents.iter().map(|d| d.topic_id.as_str()).collect();
    let mut cluster_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &corpus.mentions {
        *cluster_sizes.entry(m.gold_cluster_id.as_str()).or_insert(0) += 1;
    }
    CorpusStats {
        topics: topics.len(),
        documents: corpus.documents.len(),
        mentions: corpus.mentions.len(),
        clusters: cluster_sizes.len(),
        singletons: cluster_sizes.values().filter(|&&n| n == 1).count(),
    }
}
