//! Joint optimization of the factual and argument objectives, with the
//! counterfactual bias head trained in strict gradient isolation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{cluster, filter_likely_pairs, LinkMode, Partition, ScoredPair};
use crate::corpus::{Corpus, Mention};
use crate::encoding::{
    build_argument_only_input, build_factual_input, build_trigger_only_input, encode_on_tape,
    MentionContext, ToyBackend,
};
use crate::metrics::b_cubed;
use crate::nn::{AdamW, NodeId, ParamGroup, ParamStore, Tape};
use crate::pairgen::MentionPair;
use crate::scoring::{
    argument_score, bias_score, debiased_combine, factual_score, init_head_params, HeadConfig,
    ScoreBundle,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },
    #[error("mention {0} not found in corpus")]
    UnknownMention(String),
    #[error("encoding failed: {0}")]
    Encode(#[from] crate::encoding::EncodeError),
    #[error("scoring failed: {0}")]
    Score(#[from] crate::scoring::ScoreError),
    #[error("metric failure: {0}")]
    Metric(#[from] crate::metrics::MetricError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    BceOnProbabilities,
    BceOnLogits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub alpha_train: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub weight_decay: f64,
    pub d: usize,
    pub d_h: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_encoder: 1e-5,
            lr_heads: 1e-4,
            alpha_train: 0.5,
            batch_size: 32,
            epochs: 8,
            seed: 7,
            loss_kind: LossKind::BceOnProbabilities,
            weight_decay: 0.01,
            d: 64,
            d_h: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lr_encoder <= 0.0 || self.lr_heads <= 0.0 {
            return Err(TrainError::InvalidConfig("learning rates must be positive".into()));
        }
        if self.alpha_train < 0.0 {
            return Err(TrainError::InvalidConfig("alpha_train must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
        }
        if self.d == 0 || self.d_h == 0 {
            return Err(TrainError::InvalidConfig("dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy with boundary clamping at 1e-7.
pub fn bce(y_true: &[f64], y_pred: &[f64]) -> Result<f64, TrainError> {
    if y_true.len() != y_pred.len() {
        return Err(TrainError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let m = y_true.len() as f64;
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(&t, &p)| {
            let pc = p.clamp(crate::nn::BCE_CLAMP, 1.0 - crate::nn::BCE_CLAMP);
            -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
        })
        .sum::<f64>()
        / m)
}

/// Loss_F + α·Loss_C over a batch of factual and argument probabilities.
/// The bias head's loss is monitored elsewhere and never enters this sum.
pub fn joint_loss(
    y_true: &[f64],
    p_f: &[f64],
    p_c: &[f64],
    alpha_train: f64,
) -> Result<f64, TrainError> {
    Ok(bce(y_true, p_f)? + alpha_train * bce(y_true, p_c)?)
}

/// A trained (or initialized) model: toy backend plus every parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub backend: ToyBackend,
    pub head: HeadConfig,
    pub store: ParamStore,
    pub config: TrainConfig,
}

impl Model {
    pub fn init(config: &TrainConfig) -> Result<Model, TrainError> {
        config.validate()?;
        let backend = ToyBackend::new(config.d);
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        backend.init_params(&mut store, &mut rng);
        init_head_params(HeadConfig::new(config.d, config.d_h), &mut store, &mut rng);
        Ok(Model {
            backend,
            head: HeadConfig::new(config.d, config.d_h),
            store,
            config: config.clone(),
        })
    }

    /// Raw component scores for one pair (eval mode, scratch tape).
    pub fn score_pair(
        &self,
        s1: &MentionContext,
        s2: &MentionContext,
    ) -> Result<(f64, f64, f64), TrainError> {
        let mut tape = Tape::new();
        let nodes = forward_pair(&mut tape, &self.store, &self.backend, s1, s2)?;
        Ok((
            tape.value(nodes.p_f).data[0],
            tape.value(nodes.p_c).data[0],
            tape.value(nodes.s_bias).data[0],
        ))
    }

    /// Debiased score bundle per Eq.-19-style combination.
    pub fn score_pair_debiased(
        &self,
        s1: &MentionContext,
        s2: &MentionContext,
        alpha_infer: f64,
        beta: f64,
    ) -> Result<ScoreBundle, TrainError> {
        let (p_f, p_c, s_bias) = self.score_pair(s1, s2)?;
        Ok(debiased_combine(p_f, p_c, s_bias, alpha_infer, beta)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TrainError> {
        let json = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Model, TrainError> {
        let json = std::fs::read_to_string(path)?;
        serde_json::from_str(&json)
            .map_err(|e| TrainError::InvalidConfig(format!("bad checkpoint: {e}")))
    }
}

/// Probability nodes for one pair's three heads on a live tape.
pub struct PairNodes {
    pub p_f: NodeId,
    pub p_c: NodeId,
    pub s_bias: NodeId,
    pub p_f_logit: NodeId,
    pub p_c_logit: NodeId,
    pub s_bias_logit: NodeId,
}

pub fn forward_pair(
    tape: &mut Tape,
    store: &ParamStore,
    backend: &ToyBackend,
    s1: &MentionContext,
    s2: &MentionContext,
) -> Result<PairNodes, TrainError> {
    let f = encode_on_tape(tape, store, backend, &build_factual_input(s1, s2)?)?;
    let t = encode_on_tape(tape, store, backend, &build_trigger_only_input(s1, s2)?)?;
    let a = encode_on_tape(tape, store, backend, &build_argument_only_input(s1, s2)?)?;
    let p_f = factual_score(tape, store, &f)?;
    let s_b = bias_score(tape, store, &t)?;
    let p_c = argument_score(tape, store, &a)?;
    Ok(PairNodes {
        p_f: p_f.prob,
        p_c: p_c.prob,
        s_bias: s_b.prob,
        p_f_logit: p_f.logit,
        p_c_logit: p_c.logit,
        s_bias_logit: s_b.logit,
    })
}

pub fn mention_context(corpus: &Corpus, m: &Mention) -> Result<MentionContext, TrainError> {
    let sentence = corpus
        .mention_sentence(m)
        .ok_or_else(|| TrainError::UnknownMention(m.mention_id.clone()))?;
    Ok(MentionContext { tokens: sentence.to_vec(), trigger: m.trigger_span })
}

pub fn pair_contexts(
    corpus: &Corpus,
    pair: &MentionPair,
) -> Result<(MentionContext, MentionContext), TrainError> {
    let m1 = corpus
        .mention(&pair.m1)
        .ok_or_else(|| TrainError::UnknownMention(pair.m1.clone()))?;
    let m2 = corpus
        .mention(&pair.m2)
        .ok_or_else(|| TrainError::UnknownMention(pair.m2.clone()))?;
    Ok((mention_context(corpus, m1)?, mention_context(corpus, m2)?))
}

fn batch_loss_node(
    tape: &mut Tape,
    nodes: &[NodeId],
    labels: &[f64],
    loss_kind: LossKind,
) -> NodeId {
    let joined = tape.concat_cols(nodes);
    match loss_kind {
        LossKind::BceOnProbabilities => tape.bce_prob(joined, labels),
        LossKind::BceOnLogits => tape.bce_logit(joined, labels),
    }
}

/// Parameter groups for the joint objective: encoder at `lr_encoder`, the
/// factual/argument head parameters at `lr_heads`. The bias head's own
/// parameters are deliberately absent.
pub fn joint_groups(config: &TrainConfig) -> Vec<ParamGroup> {
    vec![
        ParamGroup { lr: config.lr_encoder, prefixes: vec!["enc.".into()] },
        ParamGroup {
            lr: config.lr_heads,
            prefixes: vec![
                "head.w_f".into(),
                "head.w_p".into(),
                "head.w_arg".into(),
                "head.phi_e".into(),
            ],
        },
    ]
}

/// Parameter group for the isolated bias objective: only the bias output
/// weights and the empty-context placeholder may move.
pub fn bias_groups(config: &TrainConfig) -> Vec<ParamGroup> {
    vec![ParamGroup {
        lr: config.lr_heads,
        prefixes: vec!["head.w_e".into(), "head.phi_c".into()],
    }]
}

/// One optimization step of the isolated bias objective on a batch.
/// Returns the bias-monitor loss. Every parameter outside the bias head is
/// untouched bit-for-bit: the graph detaches the encoder outputs and W_f,
/// and the optimizer group excludes them anyway (two independent fences).
pub fn train_bias_head(
    model: &mut Model,
    optimizer: &mut AdamW,
    contexts: &[(MentionContext, MentionContext)],
    labels: &[f64],
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let mut s_nodes = Vec::with_capacity(contexts.len());
    let mut s_logits = Vec::with_capacity(contexts.len());
    for (s1, s2) in contexts {
        let nodes = forward_pair(&mut tape, &model.store, &model.backend, s1, s2)?;
        s_nodes.push(nodes.s_bias);
        s_logits.push(nodes.s_bias_logit);
    }
    let loss = match model.config.loss_kind {
        LossKind::BceOnProbabilities => batch_loss_node(&mut tape, &s_nodes, labels, model.config.loss_kind),
        LossKind::BceOnLogits => batch_loss_node(&mut tape, &s_logits, labels, model.config.loss_kind),
    };
    let value = tape.value(loss).data[0];
    let grads = tape.backward(loss);
    optimizer.step(&mut model.store, &grads, &bias_groups(&model.config));
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_f: f64,
    pub loss_c: f64,
    pub bias_loss: f64,
    pub dev_b3_f1: f64,
}

#[derive(Debug)]
pub struct TrainedModel {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Dev-set pairwise inference + clustering + B³ against gold, used for
/// model selection. Scores are the factual head only: the debiasing
/// coefficients are inference-time knobs, so selection stays comparable
/// across ablation modes.
pub fn dev_b3_f1(
    model: &Model,
    corpus: &Corpus,
    pairs: &[MentionPair],
) -> Result<f64, TrainError> {
    let mut scored = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (s1, s2) = pair_contexts(corpus, p)?;
        let (p_f, _, _) = model.score_pair(&s1, &s2)?;
        scored.push(ScoredPair {
            pair_id: p.pair_id.clone(),
            m1: p.m1.clone(),
            m2: p.m2.clone(),
            score: p_f,
        });
    }
    let mentions: Vec<String> = corpus.mentions.iter().map(|m| m.mention_id.clone()).collect();
    let likely = filter_likely_pairs(&scored, 0.5);
    let pred = cluster(&mentions, &likely, &scored, 0.5, LinkMode::Average);
    let gold = gold_partition(corpus);
    Ok(b_cubed(&gold, &pred)?.f1)
}

pub fn gold_partition(corpus: &Corpus) -> Partition {
    let mut clusters: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for m in &corpus.mentions {
        clusters
            .entry(m.gold_cluster_id.as_str())
            .or_default()
            .push(m.mention_id.clone());
    }
    Partition::from_clusters(clusters.into_values())
}

/// The deterministic pair visiting order for one epoch; a pure function of
/// (n, seed, epoch) so controlled comparisons can hash-verify that two runs
/// consumed identical batch sequences.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(epoch as u64 + 1));
    order.shuffle(&mut rng);
    order
}

/// Full training loop. Each batch takes one joint-objective step (factual +
/// argument heads, encoder) and one isolated bias-head step. Per-epoch
/// history records the three losses and dev B³ F1; the returned model is
/// the best-dev-epoch snapshot.
pub fn fit(
    train_corpus: &Corpus,
    train_pairs: &[MentionPair],
    dev_corpus: &Corpus,
    dev_pairs: &[MentionPair],
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    let mut model = Model::init(config)?;
    let mut optimizer = AdamW::new(config.weight_decay);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;

    let contexts: Vec<(MentionContext, MentionContext)> = train_pairs
        .iter()
        .map(|p| pair_contexts(train_corpus, p))
        .collect::<Result<_, _>>()?;
    let labels: Vec<f64> = train_pairs.iter().map(|p| f64::from(p.gold_label)).collect();

    for epoch in 0..config.epochs {
        let order = epoch_order(train_pairs.len(), config.seed, epoch);
        let mut sum_f = 0.0;
        let mut sum_c = 0.0;
        let mut sum_bias = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let mut pf_nodes = Vec::with_capacity(chunk.len());
            let mut pc_nodes = Vec::with_capacity(chunk.len());
            let mut sb_nodes = Vec::with_capacity(chunk.len());
            let mut pf_logits = Vec::with_capacity(chunk.len());
            let mut pc_logits = Vec::with_capacity(chunk.len());
            let mut sb_logits = Vec::with_capacity(chunk.len());
            let batch_labels: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            for &i in chunk {
                let (s1, s2) = &contexts[i];
                let nodes = forward_pair(&mut tape, &model.store, &model.backend, s1, s2)?;
                pf_nodes.push(nodes.p_f);
                pc_nodes.push(nodes.p_c);
                sb_nodes.push(nodes.s_bias);
                pf_logits.push(nodes.p_f_logit);
                pc_logits.push(nodes.p_c_logit);
                sb_logits.push(nodes.s_bias_logit);
            }
            let (f_in, c_in, b_in) = match config.loss_kind {
                LossKind::BceOnProbabilities => (&pf_nodes, &pc_nodes, &sb_nodes),
                LossKind::BceOnLogits => (&pf_logits, &pc_logits, &sb_logits),
            };
            let loss_f = batch_loss_node(&mut tape, f_in, &batch_labels, config.loss_kind);
            let loss_c = batch_loss_node(&mut tape, c_in, &batch_labels, config.loss_kind);
            let joint = tape.add_scaled(loss_f, loss_c, config.alpha_train);
            let bias_loss = batch_loss_node(&mut tape, b_in, &batch_labels, config.loss_kind);

            let joint_value = tape.value(joint).data[0];
            let bias_value = tape.value(bias_loss).data[0];
            if !joint_value.is_finite() || !bias_value.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: batch_idx,
                    value: if joint_value.is_finite() { bias_value } else { joint_value },
                });
            }

            let joint_grads = tape.backward(joint);
            optimizer.step(&mut model.store, &joint_grads, &joint_groups(config));
            let bias_grads = tape.backward(bias_loss);
            optimizer.step(&mut model.store, &bias_grads, &bias_groups(config));

            sum_f += tape.value(loss_f).data[0];
            sum_c += tape.value(loss_c).data[0];
            sum_bias += bias_value;
            batches += 1;
        }
        let dev = if dev_pairs.is_empty() {
            0.0
        } else {
            dev_b3_f1(&model, dev_corpus, dev_pairs)?
        };
        let denom = batches.max(1) as f64;
        history.push(EpochRecord {
            epoch,
            loss_f: sum_f / denom,
            loss_c: sum_c / denom,
            bias_loss: sum_bias / denom,
            dev_b3_f1: dev,
        });
        let better = best.as_ref().map_or(true, |(_, b, _)| dev > *b);
        if better {
            best = Some((epoch, dev, model.clone()));
        }
    }
    match best {
        Some((epoch, _, selected)) => Ok(TrainedModel {
            model: selected,
            history,
            best_epoch: Some(epoch),
        }),
        None => Ok(TrainedModel { model, history, best_epoch: None }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairgen::{generate_pairs, PairScope};
    use crate::synth::{generate_confounded_corpus, ConfoundSpec};
    use rand::Rng;

    fn small_config() -> TrainConfig {
        TrainConfig {
            d: 12,
            d_h: 8,
            epochs: 2,
            batch_size: 8,
            lr_encoder: 1e-3,
            lr_heads: 1e-2,
            ..TrainConfig::default()
        }
    }

    fn tiny_data() -> (Corpus, Vec<MentionPair>) {
        let spec = ConfoundSpec {
            n_train: 24,
            n_dev: 0,
            n_test: 0,
            ..ConfoundSpec::default()
        };
        let (train, _, _) = generate_confounded_corpus(&spec, 3).unwrap();
        let pairs = generate_pairs(&train, PairScope::Subtopic);
        (train, pairs)
    }

    #[test]
    fn bce_hand_values() {
        assert!((bce(&[1.0], &[0.5]).unwrap() - 0.693147).abs() < 1e-5);
        assert!(bce(&[1.0, 0.0], &[1.0 - 1e-7, 1e-7]).unwrap() <= 1e-6);
        assert!((bce(&[1.0, 0.0], &[0.9, 0.2]).unwrap() - 0.16425).abs() < 1e-5);
        assert!(matches!(bce(&[1.0], &[0.5, 0.5]), Err(TrainError::LengthMismatch(1, 2))));
    }

    #[test]
    fn joint_loss_reduces_to_loss_f_at_zero_alpha() {
        let y = [1.0, 0.0, 1.0];
        let p_f = [0.8, 0.3, 0.6];
        let p_c = [0.5, 0.5, 0.9];
        assert_eq!(joint_loss(&y, &p_f, &p_c, 0.0).unwrap(), bce(&y, &p_f).unwrap());
        let j = joint_loss(&y, &p_f, &p_c, 0.5).unwrap();
        let oracle = bce(&y, &p_f).unwrap() + 0.5 * bce(&y, &p_c).unwrap();
        assert!((j - oracle).abs() < 1e-12);
    }

    #[test]
    fn bias_step_leaves_encoder_and_fusion_bit_identical() {
        let (train, pairs) = tiny_data();
        let config = small_config();
        let mut model = Model::init(&config).unwrap();
        let mut opt = AdamW::new(config.weight_decay);
        let contexts: Vec<_> = pairs
            .iter()
            .take(8)
            .map(|p| pair_contexts(&train, p).unwrap())
            .collect();
        let labels: Vec<f64> = pairs.iter().take(8).map(|p| f64::from(p.gold_label)).collect();
        let enc_before = model.store.checksum("enc.");
        let wf_before = model.store.checksum("head.w_f");
        let we_before = model.store.checksum("head.w_e");
        let loss = train_bias_head(&mut model, &mut opt, &contexts, &labels).unwrap();
        assert!(loss > 0.0);
        assert_eq!(model.store.checksum("enc."), enc_before);
        assert_eq!(model.store.checksum("head.w_f"), wf_before);
        assert_ne!(model.store.checksum("head.w_e"), we_before);
    }

    #[test]
    fn zero_epochs_returns_initialized_model_and_empty_history() {
        let (train, pairs) = tiny_data();
        let mut config = small_config();
        config.epochs = 0;
        let out = fit(&train, &pairs, &train, &[], &config).unwrap();
        assert!(out.history.is_empty());
        assert!(out.best_epoch.is_none());
        let fresh = Model::init(&config).unwrap();
        assert_eq!(out.model.store.checksum(""), fresh.store.checksum(""));
    }

    #[test]
    fn fixed_seed_reproduces_identical_history() {
        let (train, pairs) = tiny_data();
        let config = small_config();
        let a = fit(&train, &pairs, &train, &pairs, &config).unwrap();
        let b = fit(&train, &pairs, &train, &pairs, &config).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.store.checksum(""), b.model.store.checksum(""));
    }

    #[test]
    fn loss_decreases_on_memorization_set() {
        let (train, pairs) = tiny_data();
        let pairs: Vec<_> = pairs.into_iter().take(16).collect();
        let mut config = small_config();
        config.epochs = 30;
        config.batch_size = 16;
        let out = fit(&train, &pairs, &train, &[], &config).unwrap();
        let first = out.history.first().unwrap().loss_f;
        let last = out.history.last().unwrap().loss_f;
        assert!(last < first, "loss_f {first} -> {last}");
    }

    #[test]
    fn separable_pairs_reach_high_accuracy() {
        // label ⇔ identical trigger token: separable through the e_a⊙e_b block
        use crate::corpus::{Document, Split};
        let words = ["killed", "attacked", "crashed", "flooded", "merged", "sued"];
        let mut documents = Vec::new();
        let mut mentions = Vec::new();
        for i in 0..30 {
            let topic = format!("t{i:03}");
            let coref = i % 2 == 0;
            let w1 = words[i % words.len()];
            let w2 = if coref { w1 } else { words[(i + 1) % words.len()] };
            for (tag, w) in [("d0", w1), ("d1", w2)] {
                let doc_id = format!("{topic}-{tag}");
                documents.push(Document {
                    doc_id: doc_id.clone(),
                    topic_id: topic.clone(),
                    subtopic_id: "s0".into(),
                    sentences: vec![vec!["they".into(), w.to_string(), "yesterday".into()]],
                    source: None,
                });
                mentions.push(Mention {
                    mention_id: format!("{doc_id}-m"),
                    doc_id,
                    sentence_idx: 0,
                    trigger_span: (1, 2),
                    gold_cluster_id: format!("{topic}:c{}", if coref || tag == "d0" { 0 } else { 1 }),
                    argument_spans: None,
                });
            }
        }
        let train = Corpus::new(documents, mentions, Split::Train);
        let pairs = generate_pairs(&train, PairScope::Subtopic);
        let mut config = small_config();
        config.epochs = 50;
        config.batch_size = 16;
        let out = fit(&train, &pairs, &train, &[], &config).unwrap();
        let mut correct = 0;
        for p in &pairs {
            let (s1, s2) = pair_contexts(&train, p).unwrap();
            let (p_f, _, _) = out.model.score_pair(&s1, &s2).unwrap();
            if (p_f >= 0.5) == (p.gold_label == 1) {
                correct += 1;
            }
        }
        let acc = correct as f64 / pairs.len() as f64;
        assert!(acc >= 0.95, "train accuracy {acc}");
    }

    #[test]
    fn joint_gradients_match_finite_differences() {
        use crate::nn::finite_difference;
        let (train, pairs) = tiny_data();
        let config = small_config();
        let model = Model::init(&config).unwrap();
        let mut store = model.store.clone();
        // nudge head outputs off zero so gradients are informative
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for name in ["head.w_p", "head.w_arg", "head.w_e"] {
            for v in &mut store.get_mut(name).unwrap().data {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
        let contexts: Vec<_> = pairs
            .iter()
            .take(4)
            .map(|p| pair_contexts(&train, p).unwrap())
            .collect();
        let labels: Vec<f64> = pairs.iter().take(4).map(|p| f64::from(p.gold_label)).collect();
        let loss_of = |store: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let mut pf = Vec::new();
            let mut pc = Vec::new();
            for (s1, s2) in &contexts {
                let n = forward_pair(&mut tape, store, &model.backend, s1, s2).unwrap();
                pf.push(n.p_f);
                pc.push(n.p_c);
            }
            let lf = batch_loss_node(&mut tape, &pf, &labels, LossKind::BceOnProbabilities);
            let lc = batch_loss_node(&mut tape, &pc, &labels, LossKind::BceOnProbabilities);
            let j = tape.add_scaled(lf, lc, config.alpha_train);
            tape.value(j).data[0]
        };
        let mut tape = Tape::new();
        let mut pf = Vec::new();
        let mut pc = Vec::new();
        for (s1, s2) in &contexts {
            let n = forward_pair(&mut tape, &store, &model.backend, s1, s2).unwrap();
            pf.push(n.p_f);
            pc.push(n.p_c);
        }
        let lf = batch_loss_node(&mut tape, &pf, &labels, LossKind::BceOnProbabilities);
        let lc = batch_loss_node(&mut tape, &pc, &labels, LossKind::BceOnProbabilities);
        let j = tape.add_scaled(lf, lc, config.alpha_train);
        let grads = tape.backward(j);
        for name in ["head.w_f", "head.w_p", "head.w_arg", "head.phi_e", "enc.wq"] {
            let fd = finite_difference(&mut store, name, &loss_of, 1e-5);
            let g = &grads[name];
            for (x, y) in g.data.iter().zip(&fd.data) {
                let denom = x.abs().max(y.abs()).max(1e-3);
                assert!(((x - y) / denom).abs() < 1e-4, "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let config = small_config();
        let model = Model::init(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back.store.checksum(""), model.store.checksum(""));
        assert_eq!(back.config, model.config);
    }

    #[test]
    fn nonpositive_learning_rate_is_rejected() {
        let mut config = small_config();
        config.lr_encoder = 0.0;
        assert!(matches!(Model::init(&config), Err(TrainError::InvalidConfig(_))));
    }
}
