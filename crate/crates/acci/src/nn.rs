//! Minimal tape-based reverse-mode automatic differentiation over dense
//! `f64` matrices, a named parameter store, and AdamW with parameter groups.
//!
//! The op set is exactly what the encoder and scoring heads need: matrix
//! product, elementwise arithmetic, tanh/sigmoid, row softmax, row
//! gather/mean pooling, column concatenation, a gradient-stopping `detach`,
//! and the two binary-cross-entropy objectives. Values are computed eagerly
//! when a node is recorded; `backward` replays the tape in reverse.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Matrix::from_vec(1, 1, vec![v])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "elementwise shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Stable content hash of a parameter's exact bit pattern.
pub fn bit_checksum(m: &Matrix) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for v in &m.data {
        for b in v.to_bits().to_le_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(String),
    MatMul(usize, usize),
    Add(usize, usize),
    /// a + c*b
    AddScaled(usize, usize, f64),
    Hadamard(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    Scale(usize, f64),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    MeanRows(usize),
    Transpose(usize),
    Detach,
    /// mean BCE over elementwise predictions in (0,1)
    BceProb(usize, Vec<f64>),
    /// mean BCE over raw logits (numerically stable form)
    BceLogit(usize, Vec<f64>),
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Clamp distance from {0,1} used by the probability-space BCE.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub type NodeId = usize;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, m: Matrix) -> NodeId {
        self.push(Op::Input, m)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        let value = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .clone();
        self.push(Op::Param(name.to_string()), value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x + c * y);
        self.push(Op::AddScaled(a, b, c), v)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x * y);
        self.push(Op::Hadamard(a, b), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let mut out = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (c, e) in exps.iter().enumerate() {
                out.set(r, c, e / sum);
            }
        }
        self.push(Op::SoftmaxRows(a), out)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn concat_cols(&mut self, ids: &[NodeId]) -> NodeId {
        let rows = self.nodes[ids[0]].value.rows;
        let total: usize = ids.iter().map(|&i| self.nodes[i].value.cols).sum();
        let mut out = Matrix::zeros(rows, total);
        let mut offset = 0;
        for &i in ids {
            let m = &self.nodes[i].value;
            assert_eq!(m.rows, rows, "concat_cols row count");
            for r in 0..rows {
                for c in 0..m.cols {
                    out.set(r, offset + c, m.get(r, c));
                }
            }
            offset += m.cols;
        }
        self.push(Op::ConcatCols(ids.to_vec()), out)
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let src = &self.nodes[a].value;
        let mut out = Matrix::zeros(indices.len(), src.cols);
        for (r, &i) in indices.iter().enumerate() {
            for c in 0..src.cols {
                out.set(r, c, src.get(i, c));
            }
        }
        self.push(Op::GatherRows(a, indices.to_vec()), out)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let mut out = Matrix::zeros(1, src.cols);
        for r in 0..src.rows {
            for c in 0..src.cols {
                out.data[c] += src.get(r, c) / src.rows as f64;
            }
        }
        self.push(Op::MeanRows(a), out)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Identity forward; blocks the gradient entirely.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.clone();
        self.push(Op::Detach, v)
    }

    pub fn bce_prob(&mut self, pred: NodeId, targets: &[f64]) -> NodeId {
        let p = &self.nodes[pred].value;
        assert_eq!(p.data.len(), targets.len(), "bce target length");
        let m = targets.len() as f64;
        let loss = p
            .data
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
            })
            .sum::<f64>()
            / m;
        self.push(Op::BceProb(pred, targets.to_vec()), Matrix::scalar(loss))
    }

    pub fn bce_logit(&mut self, logits: NodeId, targets: &[f64]) -> NodeId {
        let z = &self.nodes[logits].value;
        assert_eq!(z.data.len(), targets.len(), "bce target length");
        let m = targets.len() as f64;
        let loss = z
            .data
            .iter()
            .zip(targets)
            .map(|(&z, &t)| z.max(0.0) - z * t + (1.0 + (-z.abs()).exp()).ln())
            .sum::<f64>()
            / m;
        self.push(Op::BceLogit(logits, targets.to_vec()), Matrix::scalar(loss))
    }

    /// Reverse pass from a scalar node; returns gradients for every
    /// parameter node reached by a differentiable path, summed by name.
    pub fn backward(&self, loss: NodeId) -> BTreeMap<String, Matrix> {
        assert_eq!(self.nodes[loss].value.data.len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Matrix::scalar(1.0));

        let acc = |grads: &mut Vec<Option<Matrix>>, id: usize, g: Matrix| {
            match &mut grads[id] {
                Some(existing) => {
                    for (e, v) in existing.data.iter_mut().zip(&g.data) {
                        *e += v;
                    }
                }
                slot => *slot = Some(g),
            }
        };

        let mut params: BTreeMap<String, Matrix> = BTreeMap::new();
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Input | Op::Detach => {}
                Op::Param(name) => {
                    match params.get_mut(name) {
                        Some(existing) => {
                            for (e, v) in existing.data.iter_mut().zip(&g.data) {
                                *e += v;
                            }
                        }
                        None => {
                            params.insert(name.clone(), g);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.nodes[*b].value.transpose());
                    let db = self.nodes[*a].value.transpose().matmul(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddScaled(a, b, c) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|x| c * x));
                }
                Op::Hadamard(a, b) => {
                    let da = g.zip(&self.nodes[*b].value, |gv, bv| gv * bv);
                    let db = g.zip(&self.nodes[*a].value, |gv, av| gv * av);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    acc(&mut grads, *a, g.zip(y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    acc(&mut grads, *a, g.zip(y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let mut da = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let dot: f64 = (0..y.cols).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols {
                            da.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut grads, *a, g.map(|x| c * x));
                }
                Op::ConcatCols(ids) => {
                    let mut offset = 0;
                    for &src in ids {
                        let m = &self.nodes[src].value;
                        let mut part = Matrix::zeros(m.rows, m.cols);
                        for r in 0..m.rows {
                            for c in 0..m.cols {
                                part.set(r, c, g.get(r, offset + c));
                            }
                        }
                        offset += m.cols;
                        acc(&mut grads, src, part);
                    }
                }
                Op::GatherRows(a, indices) => {
                    let src = &self.nodes[*a].value;
                    let mut da = Matrix::zeros(src.rows, src.cols);
                    for (r, &i) in indices.iter().enumerate() {
                        for c in 0..src.cols {
                            da.data[i * src.cols + c] += g.get(r, c);
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::MeanRows(a) => {
                    let src = &self.nodes[*a].value;
                    let mut da = Matrix::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        for c in 0..src.cols {
                            da.set(r, c, g.data[c] / src.rows as f64);
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::Transpose(a) => {
                    acc(&mut grads, *a, g.transpose());
                }
                Op::BceProb(a, targets) => {
                    let p = &self.nodes[*a].value;
                    let m = targets.len() as f64;
                    let scale = g.data[0] / m;
                    let mut da = Matrix::zeros(p.rows, p.cols);
                    for (i, (&pv, &t)) in p.data.iter().zip(targets).enumerate() {
                        // gradient through the clamp is zero in saturation
                        if pv <= BCE_CLAMP || pv >= 1.0 - BCE_CLAMP {
                            continue;
                        }
                        da.data[i] = scale * (-t / pv + (1.0 - t) / (1.0 - pv));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::BceLogit(a, targets) => {
                    let z = &self.nodes[*a].value;
                    let m = targets.len() as f64;
                    let scale = g.data[0] / m;
                    let da = Matrix {
                        rows: z.rows,
                        cols: z.cols,
                        data: z
                            .data
                            .iter()
                            .zip(targets)
                            .map(|(&zv, &t)| scale * (sigmoid(zv) - t))
                            .collect(),
                    };
                    acc(&mut grads, *a, da);
                }
            }
        }
        params
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Named dense parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, m: Matrix) {
        self.params.insert(name.to_string(), m);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.params.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// FNV over the exact bit patterns of every parameter whose name starts
    /// with `prefix`, in sorted name order.
    pub fn checksum(&self, prefix: &str) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        for (name, m) in &self.params {
            if !name.starts_with(prefix) {
                continue;
            }
            for b in name.bytes() {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x100000001b3);
            }
            hash ^= bit_checksum(m);
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }
}

/// One learning-rate group; `prefixes` select parameters by name prefix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamGroup {
    pub lr: f64,
    pub prefixes: Vec<String>,
}

impl ParamGroup {
    fn contains(&self, name: &str) -> bool {
        self.prefixes.iter().any(|p| name.starts_with(p))
    }
}

/// AdamW: Adam moments plus decoupled weight decay applied directly to the
/// weights, never through the moment estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    t: BTreeMap<String, u64>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: BTreeMap::new(),
        }
    }

    /// Update exactly the parameters that both received a gradient and
    /// belong to some group. Per-parameter step counters keep bias
    /// correction honest when different subsets step at different times.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &BTreeMap<String, Matrix>,
        groups: &[ParamGroup],
    ) {
        for (name, grad) in grads {
            let Some(group) = groups.iter().find(|g| g.contains(name)) else {
                continue;
            };
            let Some(param) = store.get_mut(name) else {
                continue;
            };
            let n = param.data.len();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let t = self.t.entry(name.clone()).or_insert(0);
            *t += 1;
            let bc1 = 1.0 - self.beta1.powi(*t as i32);
            let bc2 = 1.0 - self.beta2.powi(*t as i32);
            for i in 0..n {
                let g = grad.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.data[i] -= group.lr * (m_hat / (v_hat.sqrt() + self.eps)
                    + self.weight_decay * param.data[i]);
            }
        }
    }
}

/// Central finite-difference gradient of `f` with respect to parameter
/// `name`; `f` must be a pure function of the store.
pub fn finite_difference(
    store: &mut ParamStore,
    name: &str,
    f: &dyn Fn(&ParamStore) -> f64,
    h: f64,
) -> Matrix {
    let shape = {
        let p = store.get(name).expect("parameter exists");
        (p.rows, p.cols)
    };
    let mut grad = Matrix::zeros(shape.0, shape.1);
    for i in 0..grad.data.len() {
        let orig = store.get(name).unwrap().data[i];
        store.get_mut(name).unwrap().data[i] = orig + h;
        let up = f(store);
        store.get_mut(name).unwrap().data[i] = orig - h;
        let down = f(store);
        store.get_mut(name).unwrap().data[i] = orig;
        grad.data[i] = (up - down) / (2.0 * h);
    }
    grad
}
