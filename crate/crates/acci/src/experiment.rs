//! End-to-end experiment orchestration: the pinned synthetic experiment,
//! ablation table, β sweep, and the two-loss training comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster, filter_likely_pairs, LinkMode, ScoredPair};
use crate::corpus::Corpus;
use crate::metrics::{evaluate, MetricReport};
use crate::pairgen::{fnv1a, generate_pairs, MentionPair, PairScope};
use crate::synth::{generate_confounded_corpus, ConfoundSpec, SynthError};
use crate::training::{
    epoch_order, fit, gold_partition, pair_contexts, Model, TrainConfig, TrainError, TrainedModel,
};

/// The pinned synthetic experiment every directional test shares.
pub fn standard_spec() -> ConfoundSpec {
    ConfoundSpec {
        p_confounder: 0.9,
        flip_rate_test: 1.0,
        n_train: 5000,
        n_dev: 1000,
        n_test: 1000,
        ..ConfoundSpec::default()
    }
}

pub const STANDARD_SEED: u64 = 7;

/// Training configuration pinned for the standard synthetic experiment.
/// Sized so the full run (generation, training, scoring, ablation, sweep)
/// finishes in a few minutes on one CPU core while the learned bias head
/// saturates on the trigger-match shortcut.
pub fn standard_train_config() -> TrainConfig {
    TrainConfig {
        d: 32,
        d_h: 32,
        epochs: 8,
        batch_size: 32,
        lr_encoder: 1e-3,
        lr_heads: 1e-2,
        alpha_train: 0.5,
        weight_decay: 0.01,
        seed: STANDARD_SEED,
        ..TrainConfig::default()
    }
}

#[derive(Debug)]
pub struct ExperimentData {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub train_pairs: Vec<MentionPair>,
    pub dev_pairs: Vec<MentionPair>,
    pub test_pairs: Vec<MentionPair>,
}

pub fn build_experiment_data(spec: &ConfoundSpec, seed: u64) -> Result<ExperimentData, SynthError> {
    let (train, dev, test) = generate_confounded_corpus(spec, seed)?;
    let train_pairs = generate_pairs(&train, PairScope::Subtopic);
    let dev_pairs = generate_pairs(&dev, PairScope::Subtopic);
    let test_pairs = generate_pairs(&test, PairScope::Subtopic);
    Ok(ExperimentData { train, dev, test, train_pairs, dev_pairs, test_pairs })
}

/// Inference-time knobs (training never sees these).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceSettings {
    pub alpha_infer: f64,
    pub beta: f64,
    pub gate: f64,
    pub tau_cluster: f64,
    pub link_mode: LinkMode,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        // α matches the training-time mixing weight; β sits at the CoNLL
        // argmax of the standard experiment's β sweep
        InferenceSettings {
            alpha_infer: 0.5,
            beta: 0.75,
            gate: 0.5,
            tau_cluster: 0.5,
            link_mode: LinkMode::Average,
        }
    }
}

/// Raw component scores per pair, computed once per (model, pair set) so β
/// and α recombinations never re-run the encoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPairScore {
    pub pair_id: String,
    pub m1: String,
    pub m2: String,
    pub label: u8,
    pub p_f: f64,
    pub p_c: f64,
    pub s_bias: f64,
}

pub fn compute_raw_scores(
    model: &Model,
    corpus: &Corpus,
    pairs: &[MentionPair],
) -> Result<Vec<RawPairScore>, TrainError> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (s1, s2) = pair_contexts(corpus, p)?;
        let (p_f, p_c, s_bias) = model.score_pair(&s1, &s2)?;
        out.push(RawPairScore {
            pair_id: p.pair_id.clone(),
            m1: p.m1.clone(),
            m2: p.m2.clone(),
            label: p.gold_label,
            p_f,
            p_c,
            s_bias,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub pairwise_accuracy: f64,
    pub report: MetricReport,
}

/// Recombine cached component scores with the given coefficients, cluster,
/// and score against gold.
pub fn evaluate_with(
    raw: &[RawPairScore],
    corpus: &Corpus,
    settings: &InferenceSettings,
) -> Result<EvalResult, TrainError> {
    let mut correct = 0usize;
    let mut scored = Vec::with_capacity(raw.len());
    for r in raw {
        let y = r.p_f + settings.alpha_infer * r.p_c - settings.beta * r.s_bias;
        if (y >= 0.5) == (r.label == 1) {
            correct += 1;
        }
        scored.push(ScoredPair {
            pair_id: r.pair_id.clone(),
            m1: r.m1.clone(),
            m2: r.m2.clone(),
            score: y,
        });
    }
    let mentions: Vec<String> = corpus.mentions.iter().map(|m| m.mention_id.clone()).collect();
    let likely = filter_likely_pairs(&scored, settings.gate);
    let pred = cluster(&mentions, &likely, &scored, settings.tau_cluster, settings.link_mode);
    let report = evaluate(&gold_partition(corpus), &pred)?;
    Ok(EvalResult {
        pairwise_accuracy: if raw.is_empty() { 0.0 } else { correct as f64 / raw.len() as f64 },
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Full,
    NoTbm,
    NoCae,
    NoBoth,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] =
        [AblationMode::Full, AblationMode::NoTbm, AblationMode::NoCae, AblationMode::NoBoth];

    /// Coefficient overrides relative to the full settings: no_tbm removes
    /// the bias subtraction (β=0), no_cae the argument path (α=0), no_both
    /// is the plain pairwise baseline.
    pub fn apply(self, settings: &InferenceSettings) -> InferenceSettings {
        let mut s = *settings;
        match self {
            AblationMode::Full => {}
            AblationMode::NoTbm => s.beta = 0.0,
            AblationMode::NoCae => s.alpha_infer = 0.0,
            AblationMode::NoBoth => {
                s.alpha_infer = 0.0;
                s.beta = 0.0;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub result: EvalResult,
    /// CoNLL F1 difference vs. the full mode.
    pub delta_conll_vs_full: f64,
}

/// One trained model, four inference settings. All modes share the same
/// factual head bit-for-bit because only the combination coefficients vary.
pub fn run_ablation(
    raw: &[RawPairScore],
    corpus: &Corpus,
    settings: &InferenceSettings,
) -> Result<Vec<AblationRow>, TrainError> {
    let full = evaluate_with(raw, corpus, &AblationMode::Full.apply(settings))?;
    let full_conll = full.report.conll_f1;
    AblationMode::ALL
        .iter()
        .map(|&mode| {
            let result = evaluate_with(raw, corpus, &mode.apply(settings))?;
            let delta = result.report.conll_f1 - full_conll;
            Ok(AblationRow { mode, result, delta_conll_vs_full: delta })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub conll_f1: f64,
    pub b_cubed_f1: f64,
    pub pairwise_accuracy: f64,
}

/// Default grid: 0.0 to 1.0 inclusive in steps of 0.05 (21 points).
pub fn default_beta_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

pub fn sweep_beta(
    raw: &[RawPairScore],
    corpus: &Corpus,
    settings: &InferenceSettings,
    grid: &[f64],
) -> Result<Vec<SweepPoint>, TrainError> {
    grid.iter()
        .map(|&beta| {
            let s = InferenceSettings { beta, ..*settings };
            let r = evaluate_with(raw, corpus, &s)?;
            Ok(SweepPoint {
                beta,
                conll_f1: r.report.conll_f1,
                b_cubed_f1: r.report.b_cubed.f1,
                pairwise_accuracy: r.pairwise_accuracy,
            })
        })
        .collect()
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("beta,conll_f1,b_cubed_f1,pairwise_accuracy\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.beta, p.conll_f1, p.b_cubed_f1, p.pairwise_accuracy
        ));
    }
    out
}

/// Hash of the exact batch sequence a `fit` run consumes.
pub fn batch_order_hash(n_pairs: usize, config: &TrainConfig) -> u64 {
    let mut bytes = Vec::new();
    for epoch in 0..config.epochs {
        for idx in epoch_order(n_pairs, config.seed, epoch) {
            bytes.extend_from_slice(&(idx as u64).to_le_bytes());
        }
        bytes.push(0xff);
    }
    fnv1a(&bytes)
}

#[derive(Debug)]
pub struct LossComparison {
    pub prob_run: TrainedModel,
    pub logit_run: TrainedModel,
    pub prob_batch_hash: u64,
    pub logit_batch_hash: u64,
}

/// Train twice from the same initialization and data order, once per loss
/// kind, for the loss-function comparison harness.
pub fn compare_losses(
    train: &Corpus,
    train_pairs: &[MentionPair],
    dev: &Corpus,
    dev_pairs: &[MentionPair],
    config: &TrainConfig,
) -> Result<LossComparison, TrainError> {
    let mut prob_cfg = config.clone();
    prob_cfg.loss_kind = crate::training::LossKind::BceOnProbabilities;
    let mut logit_cfg = config.clone();
    logit_cfg.loss_kind = crate::training::LossKind::BceOnLogits;
    let prob_run = fit(train, train_pairs, dev, dev_pairs, &prob_cfg)?;
    let logit_run = fit(train, train_pairs, dev, dev_pairs, &logit_cfg)?;
    Ok(LossComparison {
        prob_batch_hash: batch_order_hash(train_pairs.len(), &prob_cfg),
        logit_batch_hash: batch_order_hash(train_pairs.len(), &logit_cfg),
        prob_run,
        logit_run,
    })
}

pub fn history_to_csv(comparison: &LossComparison) -> String {
    let mut out = String::from("epoch,loss_kind,loss_f,loss_c,bias_loss,dev_b3_f1\n");
    for (kind, run) in [
        ("bce-on-probabilities", &comparison.prob_run),
        ("bce-on-logits", &comparison.logit_run),
    ] {
        for r in &run.history {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, kind, r.loss_f, r.loss_c, r.bias_loss, r.dev_b3_f1
            ));
        }
    }
    out
}

/// Per-mode accuracy table serialization for command output.
pub fn ablation_to_json(rows: &[AblationRow]) -> serde_json::Value {
    let mut map = BTreeMap::new();
    for row in rows {
        map.insert(
            format!("{:?}", row.mode).to_lowercase(),
            serde_json::json!({
                "pairwise_accuracy": row.result.pairwise_accuracy,
                "conll_f1": row.result.report.conll_f1,
                "b_cubed_f1": row.result.report.b_cubed.f1,
                "delta_conll_vs_full": row.delta_conll_vs_full,
            }),
        );
    }
    serde_json::to_value(map).expect("ablation rows serialize")
}
