//! Dense tensors with tape-based reverse-mode automatic
//! differentiation, parameter storage, the RMSProp update, and the
//! checkpoint format.
//!
//! Everything is double precision and single threaded per tape; forward
//! results are bit-reproducible given identical inputs. A [`Tape`]
//! records every primitive eagerly; [`Tape::backward`] walks it once in
//! reverse. [`Session`] binds named parameters from a
//! [`ParameterStore`] onto a tape and maps gradients back to names.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("missing gradient for parameter {0:?}")]
    MissingGradient(String),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A dense row-major tensor of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor, NumericsError> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "tensor",
                detail: format!("shape {shape:?} wants {want} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor { shape: vec![1], data: vec![x] }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor, NumericsError> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Entries drawn uniformly from [lo, hi).
    pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor { shape, data: (0..n).map(|_| rng.uniform(lo, hi)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

/// Handle to a tape slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Value, Value),
    Sub(Value, Value),
    Mul(Value, Value),
    Scale(Value, f64),
    OneMinus(Value),
    MatVec(Value, Value),
    Concat(Vec<Value>),
    Sigmoid(Value),
    Tanh(Value),
    Softmax(Value),
    LogSoftmax(Value),
    Sum(Value),
    Pick(Value, usize),
    Row(Value, usize),
    ScalarMul(Value, Value),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Execution-ordered record of primitive operations; reverse-mode
/// gradients replay it backward. Single-owner, not shared across
/// threads; independent tapes may run concurrently.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape != b.shape {
        return Err(NumericsError::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape, b.shape),
        });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Value {
        self.nodes.push(Node { op, value });
        Value(self.nodes.len() - 1)
    }

    /// A leaf holding an input or constant.
    pub fn leaf(&mut self, t: Tensor) -> Value {
        self.push(Op::Leaf, t)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Value {
        self.leaf(Tensor::zeros(shape))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        same_shape("add", self.value(a), self.value(b))?;
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x + y).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        Ok(self.push(Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        same_shape("sub", self.value(a), self.value(b))?;
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x - y).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        Ok(self.push(Op::Sub(a, b), t))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value, NumericsError> {
        same_shape("multiply", self.value(a), self.value(b))?;
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x * y).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        Ok(self.push(Op::Mul(a, b), t))
    }

    pub fn scale(&mut self, a: Value, c: f64) -> Value {
        let data = self.value(a).data.iter().map(|x| x * c).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        self.push(Op::Scale(a, c), t)
    }

    /// 1 - x, elementwise.
    pub fn one_minus(&mut self, a: Value) -> Value {
        let data = self.value(a).data.iter().map(|x| 1.0 - x).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        self.push(Op::OneMinus(a), t)
    }

    /// Matrix [r, c] times vector [c] -> [r].
    pub fn matvec(&mut self, m: Value, v: Value) -> Result<Value, NumericsError> {
        let (ms, vs) = (self.value(m).shape.clone(), self.value(v).shape.clone());
        if ms.len() != 2 || vs.len() != 1 || ms[1] != vs[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                detail: format!("{ms:?} x {vs:?}"),
            });
        }
        let (rows, cols) = (ms[0], ms[1]);
        let mdat = &self.nodes[m.0].value.data;
        let vdat = &self.nodes[v.0].value.data;
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let row = &mdat[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for (x, y) in row.iter().zip(vdat) {
                acc += x * y;
            }
            out[r] = acc;
        }
        Ok(self.push(Op::MatVec(m, v), Tensor { shape: vec![rows], data: out }))
    }

    /// Concatenate vectors.
    pub fn concat(&mut self, parts: &[Value]) -> Result<Value, NumericsError> {
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.shape.len() != 1 {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    detail: format!("non-vector part {:?}", t.shape),
                });
            }
            data.extend_from_slice(&t.data);
        }
        let t = Tensor { shape: vec![data.len()], data };
        Ok(self.push(Op::Concat(parts.to_vec()), t))
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let data = self.value(a).data.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        self.push(Op::Sigmoid(a), t)
    }

    pub fn tanh(&mut self, a: Value) -> Value {
        let data = self.value(a).data.iter().map(|x| x.tanh()).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        self.push(Op::Tanh(a), t)
    }

    fn softmax_data(xs: &[f64]) -> Vec<f64> {
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // The floor keeps outputs strictly positive even when the
        // shifted exponent underflows.
        let exps: Vec<f64> =
            xs.iter().map(|x| (x - max).exp().max(f64::MIN_POSITIVE)).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    /// Numerically stable softmax over a vector.
    pub fn softmax(&mut self, a: Value) -> Result<Value, NumericsError> {
        let t = self.value(a);
        if t.shape.len() != 1 || t.data.is_empty() {
            return Err(NumericsError::ShapeMismatch {
                op: "softmax",
                detail: format!("need a non-empty vector, got {:?}", t.shape),
            });
        }
        let data = Self::softmax_data(&t.data);
        let out = Tensor { shape: t.shape.clone(), data };
        Ok(self.push(Op::Softmax(a), out))
    }

    /// log(softmax(x)), stable.
    pub fn log_softmax(&mut self, a: Value) -> Result<Value, NumericsError> {
        let t = self.value(a);
        if t.shape.len() != 1 || t.data.is_empty() {
            return Err(NumericsError::ShapeMismatch {
                op: "log_softmax",
                detail: format!("need a non-empty vector, got {:?}", t.shape),
            });
        }
        let max = t.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_total = t.data.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
        let data = t.data.iter().map(|x| x - log_total).collect();
        let out = Tensor { shape: t.shape.clone(), data };
        Ok(self.push(Op::LogSoftmax(a), out))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Value) -> Value {
        let total: f64 = self.value(a).data.iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(total))
    }

    /// Single entry of a vector, as a scalar.
    pub fn pick(&mut self, a: Value, index: usize) -> Result<Value, NumericsError> {
        let t = self.value(a);
        if index >= t.data.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "pick",
                detail: format!("index {index} out of {}", t.data.len()),
            });
        }
        let x = t.data[index];
        Ok(self.push(Op::Pick(a, index), Tensor::scalar(x)))
    }

    /// Scalar [1] times tensor, broadcasting the scalar.
    pub fn scalar_mul(&mut self, s: Value, a: Value) -> Result<Value, NumericsError> {
        if self.value(s).data.len() != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "scalar_mul",
                detail: format!("scalar side has shape {:?}", self.value(s).shape),
            });
        }
        let c = self.value(s).data[0];
        let data = self.value(a).data.iter().map(|x| x * c).collect();
        let t = Tensor { shape: self.value(a).shape.clone(), data };
        Ok(self.push(Op::ScalarMul(s, a), t))
    }

    /// Row of a matrix (index-select); the embedding-lookup primitive.
    pub fn row(&mut self, m: Value, index: usize) -> Result<Value, NumericsError> {
        let t = self.value(m);
        if t.shape.len() != 2 || index >= t.shape[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "index-select",
                detail: format!("row {index} of {:?}", t.shape),
            });
        }
        let cols = t.shape[1];
        let data = t.data[index * cols..(index + 1) * cols].to_vec();
        Ok(self.push(Op::Row(m, index), Tensor { shape: vec![cols], data }))
    }

    /// Sum several same-shaped values.
    pub fn add_all(&mut self, parts: &[Value]) -> Result<Value, NumericsError> {
        let mut parts = parts.iter();
        let first = *parts.next().expect("add_all needs at least one value");
        parts.try_fold(first, |acc, v| self.add(acc, *v))
    }

    /// Reverse-mode gradients of a scalar `loss` with respect to every
    /// tape slot. Slots not on a path to the loss get `None`.
    pub fn backward(&self, loss: Value) -> Result<Gradients, NumericsError> {
        if self.value(loss).data.len() != 1 {
            return Err(NumericsError::NonScalarLoss(self.value(loss).shape.clone()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g.data, self.value(*a).shape.clone());
                    accumulate(&mut grads, *b, &g.data, self.value(*b).shape.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g.data, self.value(*a).shape.clone());
                    let neg: Vec<f64> = g.data.iter().map(|x| -x).collect();
                    accumulate(&mut grads, *b, &neg, self.value(*b).shape.clone());
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> =
                        g.data.iter().zip(&self.value(*b).data).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> =
                        g.data.iter().zip(&self.value(*a).data).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                    accumulate(&mut grads, *b, &db, self.value(*b).shape.clone());
                }
                Op::Scale(a, c) => {
                    let da: Vec<f64> = g.data.iter().map(|x| x * c).collect();
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::OneMinus(a) => {
                    let da: Vec<f64> = g.data.iter().map(|x| -x).collect();
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::MatVec(m, v) => {
                    let (rows, cols) =
                        (self.value(*m).shape[0], self.value(*m).shape[1]);
                    let mdat = &self.value(*m).data;
                    let vdat = &self.value(*v).data;
                    let mut dm = vec![0.0; rows * cols];
                    let mut dv = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g.data[r];
                        let row = &mdat[r * cols..(r + 1) * cols];
                        let drow = &mut dm[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            drow[c] = gr * vdat[c];
                            dv[c] += gr * row[c];
                        }
                    }
                    accumulate(&mut grads, *m, &dm, vec![rows, cols]);
                    accumulate(&mut grads, *v, &dv, vec![cols]);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).data.len();
                        accumulate(
                            &mut grads,
                            *p,
                            &g.data[offset..offset + n],
                            self.value(*p).shape.clone(),
                        );
                        offset += n;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value.data;
                    let da: Vec<f64> =
                        g.data.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::Tanh(a) => {
                    let y = &node.value.data;
                    let da: Vec<f64> = g.data.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::Softmax(a) => {
                    let y = &node.value.data;
                    let dot: f64 = g.data.iter().zip(y).map(|(g, y)| g * y).sum();
                    let da: Vec<f64> = g.data.iter().zip(y).map(|(g, y)| y * (g - dot)).collect();
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value.data;
                    let gsum: f64 = g.data.iter().sum();
                    let da: Vec<f64> =
                        g.data.iter().zip(y).map(|(g, logp)| g - logp.exp() * gsum).collect();
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::Sum(a) => {
                    let n = self.value(*a).data.len();
                    let da = vec![g.data[0]; n];
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::Pick(a, index) => {
                    let mut da = vec![0.0; self.value(*a).data.len()];
                    da[*index] = g.data[0];
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
                Op::Row(m, index) => {
                    let (rows, cols) = (self.value(*m).shape[0], self.value(*m).shape[1]);
                    let mut dm = vec![0.0; rows * cols];
                    dm[index * cols..(index + 1) * cols].copy_from_slice(&g.data);
                    accumulate(&mut grads, *m, &dm, vec![rows, cols]);
                }
                Op::ScalarMul(s, a) => {
                    let c = self.value(*s).data[0];
                    let adat = &self.value(*a).data;
                    let ds: f64 = g.data.iter().zip(adat).map(|(g, x)| g * x).sum();
                    let da: Vec<f64> = g.data.iter().map(|g| g * c).collect();
                    accumulate(&mut grads, *s, &[ds], vec![1]);
                    accumulate(&mut grads, *a, &da, self.value(*a).shape.clone());
                }
            }
        }
        Ok(Gradients { by_value: grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Value, delta: &[f64], shape: Vec<usize>) {
    match &mut grads[v.0] {
        Some(t) => {
            for (x, d) in t.data.iter_mut().zip(delta) {
                *x += d;
            }
        }
        slot => {
            *slot = Some(Tensor { shape, data: delta.to_vec() });
        }
    }
}

/// Per-slot gradients from one backward pass.
pub struct Gradients {
    by_value: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Value) -> Option<&Tensor> {
        self.by_value.get(v.0).and_then(|g| g.as_ref())
    }
}

/// RMSProp hyperparameters. The smoothing constant and epsilon are
/// surfaced so runs are reproducible from logged config alone.
#[derive(Clone, Copy, Debug)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl RmsProp {
    pub fn new(learning_rate: f64, weight_decay: f64) -> RmsProp {
        RmsProp { learning_rate, weight_decay, decay: 0.99, epsilon: 1e-8 }
    }
}

struct Param {
    tensor: Tensor,
    accum: Tensor,
}

/// Named trainable tensors plus per-parameter RMSProp accumulators.
/// Names are unique; shapes are fixed after creation.
#[derive(Default)]
pub struct ParameterStore {
    params: BTreeMap<String, Param>,
}

impl ParameterStore {
    pub fn new() -> ParameterStore {
        ParameterStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        let accum = Tensor::zeros(tensor.shape.to_vec());
        let prev = self.params.insert(name.clone(), Param { tensor, accum });
        assert!(prev.is_none(), "duplicate parameter {name:?}");
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NumericsError> {
        self.params
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NumericsError> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.tensor)
            .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// One RMSProp step with decoupled weight decay. `gradients` must
    /// be keyed identically to the store.
    pub fn rmsprop_step(
        &mut self,
        gradients: &BTreeMap<String, Tensor>,
        cfg: &RmsProp,
    ) -> Result<(), NumericsError> {
        for name in self.params.keys() {
            if !gradients.contains_key(name) {
                return Err(NumericsError::MissingGradient(name.clone()));
            }
        }
        for (name, p) in self.params.iter_mut() {
            let g = &gradients[name];
            same_shape("rmsprop", &p.tensor, g)?;
            for i in 0..p.tensor.data.len() {
                let gi = g.data[i];
                p.accum.data[i] = cfg.decay * p.accum.data[i] + (1.0 - cfg.decay) * gi * gi;
                let step = cfg.learning_rate * gi / (p.accum.data[i].sqrt() + cfg.epsilon);
                let decay_step = cfg.learning_rate * cfg.weight_decay * p.tensor.data[i];
                p.tensor.data[i] -= step + decay_step;
            }
        }
        Ok(())
    }

    /// Serialize as a flat record of (name, shape, values) triples with
    /// a version header. Byte-stable for identical stores.
    pub fn save_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"TGCP");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for (name, p) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(p.tensor.shape.len() as u32).to_le_bytes());
            for d in &p.tensor.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for x in &p.tensor.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn load_bytes(bytes: &[u8]) -> Result<ParameterStore, NumericsError> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != b"TGCP" {
            return Err(NumericsError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != 1 {
            return Err(NumericsError::Checkpoint(format!("unknown version {version}")));
        }
        let count = r.u64()? as usize;
        let mut store = ParameterStore::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NumericsError::Checkpoint("bad name".into()))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(r.f64()?);
            }
            store.insert(name, Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(NumericsError::Checkpoint("trailing bytes".into()));
        }
        Ok(store)
    }

    pub fn save_file(&self, path: &Path) -> Result<(), NumericsError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.save_bytes())?;
        Ok(())
    }

    pub fn load_file(path: &Path) -> Result<ParameterStore, NumericsError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        ParameterStore::load_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericsError> {
        if self.pos + n > self.bytes.len() {
            return Err(NumericsError::Checkpoint("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumericsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NumericsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NumericsError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// A tape plus the parameters bound onto it by name, so gradients map
/// back to the store's keys.
pub struct Session<'s> {
    pub tape: Tape,
    store: &'s ParameterStore,
    bound: BTreeMap<String, Value>,
}

impl<'s> Session<'s> {
    pub fn new(store: &'s ParameterStore) -> Session<'s> {
        Session { tape: Tape::new(), store, bound: BTreeMap::new() }
    }

    pub fn store(&self) -> &ParameterStore {
        self.store
    }

    /// Bind a named parameter onto the tape (cached per session).
    pub fn param(&mut self, name: &str) -> Result<Value, NumericsError> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let t = self.store.get(name)?.clone();
        let v = self.tape.leaf(t);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn constant(&mut self, t: Tensor) -> Value {
        self.tape.leaf(t)
    }

    /// Backward pass mapped to parameter names. Parameters never bound
    /// or not on the loss path get zero gradients, so the result is
    /// keyed identically to the store.
    pub fn gradients(&self, loss: Value) -> Result<BTreeMap<String, Tensor>, NumericsError> {
        let grads = self.tape.backward(loss)?;
        let mut out = BTreeMap::new();
        for name in self.store.names() {
            let g = self
                .bound
                .get(name)
                .and_then(|v| grads.get(*v))
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(self.store.get(name).unwrap().shape.to_vec()));
            out.insert(name.to_string(), g);
        }
        Ok(out)
    }
}

/// Finite-difference oracle used by the test suites. Independent of the
/// tape's backward pass: it only reruns forward evaluations on a
/// perturbed store.
pub mod gradcheck {
    use super::*;

    /// Central difference of `f` w.r.t. one coordinate of one parameter.
    pub fn central_difference<F>(
        store: &mut ParameterStore,
        name: &str,
        index: usize,
        h: f64,
        mut f: F,
    ) -> f64
    where
        F: FnMut(&ParameterStore) -> f64,
    {
        let original = store.get(name).unwrap().data()[index];
        store.get_mut(name).unwrap().data_mut()[index] = original + h;
        let plus = f(store);
        store.get_mut(name).unwrap().data_mut()[index] = original - h;
        let minus = f(store);
        store.get_mut(name).unwrap().data_mut()[index] = original;
        (plus - minus) / (2.0 * h)
    }

    /// Assert that analytic gradients match central differences within
    /// `rel_tol` relative error (with a small absolute floor) for every
    /// parameter coordinate.
    pub fn assert_gradients_match<F>(
        store: &mut ParameterStore,
        analytic: &BTreeMap<String, Tensor>,
        h: f64,
        rel_tol: f64,
        mut f: F,
    ) where
        F: FnMut(&ParameterStore) -> f64,
    {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in names {
            let n = store.get(&name).unwrap().len();
            for i in 0..n {
                let numeric = central_difference(store, &name, i, h, &mut f);
                let a = analytic[&name].data()[i];
                let err = (a - numeric).abs();
                let scale = a.abs().max(numeric.abs());
                assert!(
                    err <= rel_tol * scale + 1e-8,
                    "gradient mismatch at {name}[{i}]: analytic {a}, numeric {numeric}"
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetry_and_normalization() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);

        let z = tape.leaf(Tensor::vector(vec![3.0, -1.0, 0.5, 900.0, -900.0]));
        let s = tape.softmax(z).unwrap();
        let total: f64 = tape.value(s).data().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(tape.value(s).data().iter().all(|p| *p > 0.0));
    }

    #[test]
    fn matvec_identity() {
        let mut tape = Tape::new();
        let eye = tape
            .leaf(Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap());
        let v = tape.leaf(Tensor::vector(vec![2.0, -3.0, 0.25]));
        let out = tape.matvec(eye, v).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, -3.0, 0.25]);
    }

    #[test]
    fn concat_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::vector(vec![3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).shape(), &[3]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::vector(vec![1.0]));
        let err = tape.add(a, b).unwrap_err();
        assert!(err.to_string().contains("add"));
        let m = tape.leaf(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        let err = tape.matvec(m, b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::vector(vec![1.0, -2.0, 5.0]));
        let loss = tape.sum(w);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert!((grads.get(x).unwrap().data()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(NumericsError::NonScalarLoss(_))));
    }

    /// A little random composite: matvec, concat, nonlinearities,
    /// softmax, log-softmax, pick.
    fn random_graph_loss(store: &ParameterStore) -> f64 {
        let mut sess = Session::new(store);
        let loss = random_graph(&mut sess).unwrap();
        sess.tape.value(loss).item()
    }

    fn random_graph(sess: &mut Session) -> Result<Value, NumericsError> {
        let w = sess.param("w")?;
        let m = sess.param("m")?;
        let b = sess.param("b")?;
        let mv = sess.tape.matvec(m, w)?;
        let act = sess.tape.tanh(mv);
        let sig = sess.tape.sigmoid(b);
        let cat = sess.tape.concat(&[act, sig])?;
        let sm = sess.tape.log_softmax(cat)?;
        let p0 = sess.tape.pick(sm, 1)?;
        let probs = sess.tape.softmax(cat)?;
        let pmix = sess.tape.mul(probs, cat)?;
        let weighted = sess.tape.scalar_mul(p0, pmix)?;
        let s1 = sess.tape.sum(weighted);
        let scaled = sess.tape.scale(p0, -1.5);
        let om = sess.tape.one_minus(s1);
        let d = sess.tape.sub(scaled, om)?;
        Ok(sess.tape.sum(d))
    }

    #[test]
    fn random_graphs_match_finite_differences() {
        let mut rng = Rng::new(2024);
        for _ in 0..5 {
            let mut store = ParameterStore::new();
            store.insert("w", Tensor::uniform(vec![4], -1.0, 1.0, &mut rng));
            store.insert("m", Tensor::uniform(vec![3, 4], -1.0, 1.0, &mut rng));
            store.insert("b", Tensor::uniform(vec![2], -1.0, 1.0, &mut rng));
            let mut sess = Session::new(&store);
            let loss = random_graph(&mut sess).unwrap();
            let analytic = sess.gradients(loss).unwrap();
            drop(sess);
            gradcheck::assert_gradients_match(
                &mut store,
                &analytic,
                1e-5,
                1e-4,
                random_graph_loss,
            );
        }
    }

    #[test]
    fn rmsprop_zero_gradients_keep_parameters() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::vector(vec![1.0, -2.0]));
        let grads: BTreeMap<String, Tensor> =
            [("w".to_string(), Tensor::vector(vec![0.0, 0.0]))].into();
        store.rmsprop_step(&grads, &RmsProp::new(0.1, 0.0)).unwrap();
        assert_eq!(store.get("w").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn rmsprop_descends_quadratic() {
        // f(w) = w^2 from w = 1: one step must shrink |w|.
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::scalar(1.0));
        let grads: BTreeMap<String, Tensor> =
            [("w".to_string(), Tensor::scalar(2.0))].into();
        store.rmsprop_step(&grads, &RmsProp::new(0.01, 0.0)).unwrap();
        let w = store.get("w").unwrap().data()[0];
        assert!(w.abs() < 1.0, "w = {w}");
    }

    #[test]
    fn rmsprop_twin_parameters_move_identically() {
        let mut store = ParameterStore::new();
        store.insert("a", Tensor::scalar(0.3));
        store.insert("b", Tensor::scalar(0.3));
        let grads: BTreeMap<String, Tensor> = [
            ("a".to_string(), Tensor::scalar(0.7)),
            ("b".to_string(), Tensor::scalar(0.7)),
        ]
        .into();
        for _ in 0..5 {
            store.rmsprop_step(&grads, &RmsProp::new(3e-3, 1e-4)).unwrap();
            assert_eq!(store.get("a").unwrap().data(), store.get("b").unwrap().data());
        }
    }

    #[test]
    fn rmsprop_missing_gradient_errors() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::scalar(1.0));
        let grads = BTreeMap::new();
        assert!(matches!(
            store.rmsprop_step(&grads, &RmsProp::new(0.1, 0.0)),
            Err(NumericsError::MissingGradient(_))
        ));
    }

    #[test]
    fn checkpoint_roundtrip_and_stability() {
        let mut rng = Rng::new(7);
        let mut store = ParameterStore::new();
        store.insert("enc.w", Tensor::uniform(vec![3, 5], -0.1, 0.1, &mut rng));
        store.insert("dec.b", Tensor::uniform(vec![4], -0.1, 0.1, &mut rng));
        let bytes = store.save_bytes();
        assert_eq!(bytes, store.save_bytes(), "serialization must be byte-stable");
        let back = ParameterStore::load_bytes(&bytes).unwrap();
        assert_eq!(back.save_bytes(), bytes);
        assert_eq!(back.get("enc.w").unwrap(), store.get("enc.w").unwrap());
        assert!(ParameterStore::load_bytes(b"JUNK").is_err());
    }

    #[test]
    fn session_fills_zero_gradients_for_untouched_params() {
        let mut store = ParameterStore::new();
        store.insert("used", Tensor::vector(vec![1.0, 2.0]));
        store.insert("unused", Tensor::vector(vec![3.0]));
        let mut sess = Session::new(&store);
        let w = sess.param("used").unwrap();
        let loss = sess.tape.sum(w);
        let grads = sess.gradients(loss).unwrap();
        assert_eq!(grads["used"].data(), &[1.0, 1.0]);
        assert_eq!(grads["unused"].data(), &[0.0]);
    }
}
