//! Input-variant construction (factual, trigger-only, argument-only),
//! pluggable encoder backends, and representation pooling.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Matrix, NodeId, ParamStore, Tape};
use crate::pairgen::fnv1a;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MARK_OPEN: &str = "<m>";
pub const MARK_CLOSE: &str = "</m>";
pub const TMASK: &str = "[TMASK]";

const RESERVED: [&str; 5] = [CLS, SEP, MARK_OPEN, MARK_CLOSE, TMASK];
/// Out-of-vocabulary tokens hash into this many buckets after the reserved ids.
pub const OOV_BUCKETS: usize = 1024;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("trigger span [{0}, {1}) out of bounds for sentence of length {2}")]
    BadSpan(usize, usize, usize),
    #[error("external backend failure: {0}")]
    External(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Factual,
    TriggerOnly,
    ArgumentOnly,
}

/// One mention's sentence plus its trigger token interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionContext {
    pub tokens: Vec<String>,
    pub trigger: (usize, usize),
}

impl MentionContext {
    fn check(&self) -> Result<(), EncodeError> {
        let (a, b) = self.trigger;
        if a >= b || b > self.tokens.len() {
            return Err(EncodeError::BadSpan(a, b, self.tokens.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderInput {
    pub tokens: Vec<String>,
    pub variant: Variant,
    /// Factual / trigger-only: the four marker token indices in order
    /// (open-a, close-a, open-b, close-b). Argument-only: the [TMASK]
    /// positions.
    pub marker_positions: Vec<usize>,
}

impl EncoderInput {
    /// Token indices strictly inside the first marker pair.
    pub fn span_a(&self) -> Vec<usize> {
        match self.variant {
            Variant::ArgumentOnly => {
                let sep = self.tokens.iter().position(|t| t == SEP).unwrap_or(0);
                self.marker_positions.iter().copied().filter(|&i| i < sep).collect()
            }
            _ => (self.marker_positions[0] + 1..self.marker_positions[1]).collect(),
        }
    }

    pub fn span_b(&self) -> Vec<usize> {
        match self.variant {
            Variant::ArgumentOnly => {
                let sep = self.tokens.iter().position(|t| t == SEP).unwrap_or(0);
                self.marker_positions.iter().copied().filter(|&i| i > sep).collect()
            }
            _ => (self.marker_positions[2] + 1..self.marker_positions[3]).collect(),
        }
    }
}

fn push_marked(out: &mut Vec<String>, markers: &mut Vec<usize>, m: &MentionContext) {
    for (i, tok) in m.tokens.iter().enumerate() {
        if i == m.trigger.0 {
            markers.push(out.len());
            out.push(MARK_OPEN.to_string());
        }
        out.push(tok.clone());
        if i + 1 == m.trigger.1 {
            markers.push(out.len());
            out.push(MARK_CLOSE.to_string());
        }
    }
}

/// `[CLS] ⟨marked s1⟩ [SEP] ⟨marked s2⟩ [SEP]`
pub fn build_factual_input(
    s1: &MentionContext,
    s2: &MentionContext,
) -> Result<EncoderInput, EncodeError> {
    s1.check()?;
    s2.check()?;
    let mut tokens = vec![CLS.to_string()];
    let mut markers = Vec::with_capacity(4);
    push_marked(&mut tokens, &mut markers, s1);
    tokens.push(SEP.to_string());
    push_marked(&mut tokens, &mut markers, s2);
    tokens.push(SEP.to_string());
    Ok(EncoderInput { tokens, variant: Variant::Factual, marker_positions: markers })
}

/// Only structural tokens and the triggers survive; all context is removed.
pub fn build_trigger_only_input(
    s1: &MentionContext,
    s2: &MentionContext,
) -> Result<EncoderInput, EncodeError> {
    s1.check()?;
    s2.check()?;
    let mut tokens = vec![CLS.to_string()];
    let mut markers = Vec::with_capacity(4);
    for m in [s1, s2] {
        markers.push(tokens.len());
        tokens.push(MARK_OPEN.to_string());
        tokens.extend(m.tokens[m.trigger.0..m.trigger.1].iter().cloned());
        markers.push(tokens.len());
        tokens.push(MARK_CLOSE.to_string());
        tokens.push(SEP.to_string());
    }
    Ok(EncoderInput { tokens, variant: Variant::TriggerOnly, marker_positions: markers })
}

/// Each trigger token becomes [TMASK]; markers are omitted entirely.
pub fn build_argument_only_input(
    s1: &MentionContext,
    s2: &MentionContext,
) -> Result<EncoderInput, EncodeError> {
    s1.check()?;
    s2.check()?;
    let mut tokens = vec![CLS.to_string()];
    let mut masked = Vec::new();
    for m in [s1, s2] {
        for (i, tok) in m.tokens.iter().enumerate() {
            if (m.trigger.0..m.trigger.1).contains(&i) {
                masked.push(tokens.len());
                tokens.push(TMASK.to_string());
            } else {
                tokens.push(tok.clone());
            }
        }
        tokens.push(SEP.to_string());
    }
    Ok(EncoderInput { tokens, variant: Variant::ArgumentOnly, marker_positions: masked })
}

/// Stable token id: reserved tokens first, then FNV-hashed OOV buckets.
pub fn token_id(token: &str) -> usize {
    if let Some(i) = RESERVED.iter().position(|&r| r == token) {
        return i;
    }
    RESERVED.len() + (fnv1a(token.as_bytes()) as usize % OOV_BUCKETS)
}

pub const VOCAB_SIZE: usize = RESERVED.len() + OOV_BUCKETS;

pub trait EncoderBackend {
    fn dim(&self) -> usize;
    /// Whether gradients flow into `store` parameters through this backend.
    fn trainable(&self) -> bool;
    /// Record the forward pass on `tape`, returning the L×d hidden matrix
    /// node. Non-trainable backends push their output as a constant input.
    fn forward_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: &[String],
    ) -> Result<NodeId, EncodeError>;
}

/// Trainable desk-scale backend: embedding table plus one self-attention
/// mixing layer with residual connection and tanh nonlinearity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyBackend {
    pub d: usize,
    pub max_len: usize,
}

impl ToyBackend {
    pub fn new(d: usize) -> Self {
        ToyBackend { d, max_len: 512 }
    }

    /// Parameter names all start with `enc.` so optimizer groups and
    /// checksums can address the encoder as a unit.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut impl rand::Rng) {
        let proj_scale = 1.0 / (self.d as f64).sqrt();
        let mat = |rows: usize, cols: usize, scale: f64, rng: &mut dyn rand::RngCore| {
            Matrix::from_vec(
                rows,
                cols,
                (0..rows * cols)
                    .map(|_| rand::Rng::gen_range(rng, -scale..scale))
                    .collect(),
            )
        };
        store.insert("enc.embed", mat(VOCAB_SIZE, self.d, 0.5, rng));
        for name in ["enc.wq", "enc.wk", "enc.wv", "enc.wo"] {
            store.insert(name, mat(self.d, self.d, proj_scale, rng));
        }
    }
}

impl EncoderBackend for ToyBackend {
    fn dim(&self) -> usize {
        self.d
    }

    fn trainable(&self) -> bool {
        true
    }

    fn forward_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: &[String],
    ) -> Result<NodeId, EncodeError> {
        if tokens.is_empty() {
            return Err(EncodeError::EmptyInput);
        }
        let ids: Vec<usize> = tokens.iter().map(|t| token_id(t)).collect();
        let embed = tape.param(store, "enc.embed");
        // no positional term: rows are a pure function of token identity and
        // the attention context bag, so duplicate tokens share a row exactly
        let x = tape.gather_rows(embed, &ids);
        let wq = tape.param(store, "enc.wq");
        let wk = tape.param(store, "enc.wk");
        let wv = tape.param(store, "enc.wv");
        let wo = tape.param(store, "enc.wo");
        let q = tape.matmul(x, wq);
        let k = tape.matmul(x, wk);
        let v = tape.matmul(x, wv);
        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt);
        let scaled = tape.scale(scores, 1.0 / (self.d as f64).sqrt());
        let attn = tape.softmax_rows(scaled);
        let mixed = tape.matmul(attn, v);
        let projected = tape.matmul(mixed, wo);
        let residual = tape.add(projected, x);
        Ok(tape.tanh(residual))
    }
}

/// Adapter over any contextual encoder speaking the line protocol
/// `{"tokens":[...]}` → `{"hidden":[[...]]}` on stdio.
pub struct ExternalBackend {
    d: usize,
    inner: std::cell::RefCell<ExternalProcess>,
}

struct ExternalProcess {
    child: Child,
    reader: BufReader<std::process::ChildStdout>,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    tokens: &'a [String],
}

#[derive(Deserialize)]
struct ExternalResponse {
    hidden: Vec<Vec<f64>>,
}

impl ExternalBackend {
    pub fn spawn(program: &str, args: &[String], d: usize) -> Result<Self, EncodeError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| EncodeError::External("no stdout pipe".into()))?;
        Ok(ExternalBackend {
            d,
            inner: std::cell::RefCell::new(ExternalProcess {
                child,
                reader: BufReader::new(stdout),
            }),
        })
    }

    fn request(&self, tokens: &[String]) -> Result<Matrix, EncodeError> {
        let mut inner = self.inner.borrow_mut();
        let line = serde_json::to_string(&ExternalRequest { tokens })
            .map_err(|e| EncodeError::External(e.to_string()))?;
        let stdin = inner
            .child
            .stdin
            .as_mut()
            .ok_or_else(|| EncodeError::External("no stdin pipe".into()))?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()?;
        let mut response = String::new();
        inner.reader.read_line(&mut response)?;
        let parsed: ExternalResponse = serde_json::from_str(response.trim())
            .map_err(|e| EncodeError::External(format!("bad response: {e}")))?;
        if parsed.hidden.len() != tokens.len() {
            return Err(EncodeError::External(format!(
                "row count {} != token count {}",
                parsed.hidden.len(),
                tokens.len()
            )));
        }
        let mut h = Matrix::zeros(tokens.len(), self.d);
        for (r, row) in parsed.hidden.iter().enumerate() {
            if row.len() != self.d {
                return Err(EncodeError::External(format!(
                    "row {r} has width {} != d={}",
                    row.len(),
                    self.d
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                h.set(r, c, v);
            }
        }
        Ok(h)
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl EncoderBackend for ExternalBackend {
    fn dim(&self) -> usize {
        self.d
    }

    fn trainable(&self) -> bool {
        false
    }

    fn forward_on_tape(
        &self,
        tape: &mut Tape,
        _store: &ParamStore,
        tokens: &[String],
    ) -> Result<NodeId, EncodeError> {
        if tokens.is_empty() {
            return Err(EncodeError::EmptyInput);
        }
        let h = self.request(tokens)?;
        Ok(tape.input(h))
    }
}

/// Pooled representation handles on a live tape.
#[derive(Debug, Clone, Copy)]
pub struct TapeEncoding {
    pub h: NodeId,
    pub h_cls: NodeId,
    pub e_a: NodeId,
    pub e_b: NodeId,
    pub variant: Variant,
}

pub fn encode_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    backend: &dyn EncoderBackend,
    input: &EncoderInput,
) -> Result<TapeEncoding, EncodeError> {
    let h = backend.forward_on_tape(tape, store, &input.tokens)?;
    let cls_rows = tape.gather_rows(h, &[0]);
    let h_cls = tape.mean_rows(cls_rows);
    let pool = |tape: &mut Tape, rows: &[usize]| -> NodeId {
        let g = tape.gather_rows(h, rows);
        tape.mean_rows(g)
    };
    let (span_a, span_b) = (input.span_a(), input.span_b());
    let e_a = pool(tape, &span_a);
    let e_b = pool(tape, &span_b);
    Ok(TapeEncoding { h, h_cls, e_a, e_b, variant: input.variant })
}

/// Concrete values for eval-mode callers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub h: Matrix,
    pub h_cls: Vec<f64>,
    pub e_a: Vec<f64>,
    pub e_b: Vec<f64>,
    pub variant: Variant,
}

pub fn encode(
    backend: &dyn EncoderBackend,
    store: &ParamStore,
    input: &EncoderInput,
) -> Result<EncodedPair, EncodeError> {
    let mut tape = Tape::new();
    let enc = encode_on_tape(&mut tape, store, backend, input)?;
    Ok(EncodedPair {
        h: tape.value(enc.h).clone(),
        h_cls: tape.value(enc.h_cls).data.clone(),
        e_a: tape.value(enc.e_a).data.clone(),
        e_b: tape.value(enc.e_b).data.clone(),
        variant: input.variant,
    })
}
