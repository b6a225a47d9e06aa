//! The three scoring heads — factual, counterfactual-bias, argument — and
//! the debiased score combiner.
//!
//! One fusion matrix `head.w_f` is shared by all heads (single storage).
//! The bias head reads it through a gradient stop so the bias objective can
//! never update it or the encoder; only `head.w_e` and the empty-context
//! placeholder `head.phi_c` learn from that objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{TapeEncoding, Variant};
use crate::nn::{Matrix, NodeId, ParamStore, Tape};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("expected {expected:?} encoding, got {got:?}")]
    VariantMismatch { expected: Variant, got: Variant },
    #[error("component {0} = {1} outside [0,1]")]
    OutOfRange(&'static str, f64),
}

/// Head dimensions; `d` must match the encoder output width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub d: usize,
    pub d_h: usize,
}

impl HeadConfig {
    pub fn new(d: usize, d_h: usize) -> Self {
        HeadConfig { d, d_h }
    }
}

/// Fusion weights are small random values; output weights and the two
/// placeholder vectors start at zero so every untrained head emits exactly
/// 0.5 (sigmoid of zero).
pub fn init_head_params(cfg: HeadConfig, store: &mut ParamStore, rng: &mut impl rand::Rng) {
    let scale = 1.0 / (4.0 * cfg.d as f64).sqrt();
    let w_f = Matrix::from_vec(
        4 * cfg.d,
        cfg.d_h,
        (0..4 * cfg.d * cfg.d_h)
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
    );
    store.insert("head.w_f", w_f);
    for name in ["head.w_p", "head.w_e", "head.w_arg"] {
        store.insert(name, Matrix::zeros(cfg.d_h, 1));
    }
    store.insert("head.phi_c", Matrix::zeros(1, cfg.d));
    store.insert("head.phi_e", Matrix::zeros(1, cfg.d));
}

fn expect_variant(enc: &TapeEncoding, expected: Variant) -> Result<(), ScoreError> {
    if enc.variant != expected {
        return Err(ScoreError::VariantMismatch { expected, got: enc.variant });
    }
    Ok(())
}

/// A head's raw logit and squashed probability nodes on the live tape.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub logit: NodeId,
    pub prob: NodeId,
}

fn fused_head(tape: &mut Tape, blocks: &[NodeId], w_f: NodeId, w_out: NodeId) -> HeadOutput {
    let z = tape.concat_cols(blocks);
    let pre = tape.matmul(z, w_f);
    let h = tape.tanh(pre);
    let logit = tape.matmul(h, w_out);
    let prob = tape.sigmoid(logit);
    HeadOutput { logit, prob }
}

/// p_f = σ(W_p · tanh(W_f · [h_cls ∥ e_a ∥ e_b ∥ e_a⊙e_b]))
pub fn factual_score(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &TapeEncoding,
) -> Result<HeadOutput, ScoreError> {
    expect_variant(enc, Variant::Factual)?;
    let w_f = tape.param(store, "head.w_f");
    let w_p = tape.param(store, "head.w_p");
    let prod = tape.hadamard(enc.e_a, enc.e_b);
    Ok(fused_head(tape, &[enc.h_cls, enc.e_a, enc.e_b, prod], w_f, w_p))
}

/// s_bias = σ(W_E · tanh(W_f · [Φ_c ∥ t_a ∥ t_b ∥ t_a⊙t_b])) with the
/// encoder outputs and W_f behind gradient stops.
pub fn bias_score(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &TapeEncoding,
) -> Result<HeadOutput, ScoreError> {
    expect_variant(enc, Variant::TriggerOnly)?;
    let w_f_raw = tape.param(store, "head.w_f");
    let w_f = tape.detach(w_f_raw);
    let w_e = tape.param(store, "head.w_e");
    let phi_c = tape.param(store, "head.phi_c");
    let t_a = tape.detach(enc.e_a);
    let t_b = tape.detach(enc.e_b);
    let prod = tape.hadamard(t_a, t_b);
    Ok(fused_head(tape, &[phi_c, t_a, t_b, prod], w_f, w_e))
}

/// p_c = σ(W_arg · tanh(W_f · [C_arg ∥ Φ_E ∥ Φ_E ∥ 0])); the fourth block
/// is zero-padded so the shared W_f shape serves every head.
pub fn argument_score(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &TapeEncoding,
) -> Result<HeadOutput, ScoreError> {
    expect_variant(enc, Variant::ArgumentOnly)?;
    let w_f = tape.param(store, "head.w_f");
    let w_arg = tape.param(store, "head.w_arg");
    let phi_e = tape.param(store, "head.phi_e");
    let d = tape.value(phi_e).cols;
    let zero = tape.input(Matrix::zeros(1, d));
    Ok(fused_head(tape, &[enc.h_cls, phi_e, phi_e, zero], w_f, w_arg))
}

/// All three component scores plus the combined result for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBundle {
    pub p_f: f64,
    pub p_c: f64,
    pub s_bias: f64,
    pub y: f64,
    pub alpha_infer: f64,
    pub beta: f64,
}

impl ScoreBundle {
    pub fn decision(&self) -> bool {
        self.y >= 0.5
    }
}

/// y = p_f + α·p_c − β·s_bias; y may leave [0,1], and the coreference
/// decision is y ≥ 0.5.
pub fn debiased_combine(
    p_f: f64,
    p_c: f64,
    s_bias: f64,
    alpha_infer: f64,
    beta: f64,
) -> Result<ScoreBundle, ScoreError> {
    for (name, v) in [("p_f", p_f), ("p_c", p_c), ("s_bias", s_bias)] {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(ScoreError::OutOfRange(name, v));
        }
    }
    Ok(ScoreBundle {
        p_f,
        p_c,
        s_bias,
        y: p_f + alpha_infer * p_c - beta * s_bias,
        alpha_infer,
        beta,
    })
}

/// Score dump record: `{"pair_id","p_f","p_c","s_bias","y","decision"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub pair_id: String,
    pub p_f: f64,
    pub p_c: f64,
    pub s_bias: f64,
    pub y: f64,
    pub decision: bool,
}

impl ScoreRecord {
    pub fn from_bundle(pair_id: &str, b: &ScoreBundle) -> Self {
        ScoreRecord {
            pair_id: pair_id.to_string(),
            p_f: b.p_f,
            p_c: b.p_c,
            s_bias: b.s_bias,
            y: b.y,
            decision: b.decision(),
        }
    }
}

pub fn write_scores<W: std::io::Write>(
    records: &[ScoreRecord],
    mut out: W,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
