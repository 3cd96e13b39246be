//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a tape: every operation appends a node whose parents have
//! strictly smaller ids, so iterating ids backwards is a reverse topological
//! order. Complex quantities are carried as `(re, im)` pairs of real nodes
//! (see [`complex`]); all gradients are taken with respect to that real
//! embedding.
//!
//! Lifecycle: a graph is built for one forward pass, [`Graph::backward`] is
//! called once or more on scalar roots, and the graph is dropped. Gradients
//! live in a separate [`Gradients`] value, so the tape itself is never
//! mutated by a backward pass and may be reused for several roots.

pub mod complex;
pub mod gradcheck;
mod lstm;
mod ops;

use std::collections::BTreeMap;

use crate::error::{shape_err, Error, Result};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

pub use lstm::LstmWeights;
pub(crate) use lstm::{lstm_backward, LstmCache};
pub use ops::{log_sum_exp, ForwardOp};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Unary {
    Neg,
    Scale(f64),
    AddScalar(f64),
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Square,
    ClampMin(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

pub(crate) enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    Sum(Var),
    SumAxis { input: Var, axis: usize },
    Reshape(Var),
    Permute { input: Var, perm: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    SelectRows { input: Var, rows: Vec<usize> },
    Pick { input: Var, index: Vec<usize> },
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Inverse(Var),
    Diag(Var),
    Softmax { input: Var, temperature: f64 },
    LogSoftmax(Var),
    Conv1d { input: Var, filters: Var },
    Lstm { inputs: [Var; 4], cache: Box<LstmCache> },
    Ctc { input: Var, grad: Tensor },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
}

/// A single-threaded autodiff tape, optionally bound to a parameter store.
pub struct Graph<'p> {
    pub(crate) nodes: Vec<Node>,
    params: Option<&'p ParameterStore>,
    bound: BTreeMap<String, Var>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: None,
            bound: BTreeMap::new(),
        }
    }

    /// A graph whose [`Graph::param`] lookups resolve against `store`.
    pub fn with_params(store: &'p ParameterStore) -> Self {
        Self {
            nodes: Vec::new(),
            params: Some(store),
            bound: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf node. Gradients flow into leaves but never past them.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    /// Binds the named parameter of the attached store, creating its leaf on
    /// first use and returning the same node afterwards.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let store = self
            .params
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let value = store
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?
            .clone();
        let v = self.leaf(value);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Parameters bound so far, in name order.
    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.bound.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Runs reverse accumulation from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 {
            return Err(Error::NonScalarRoot {
                shape: rv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients of every bound parameter, keyed by name. Parameters not
    /// reached by the backward pass get zeros.
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.bound
            .iter()
            .map(|(name, &v)| {
                let g = grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

/// Result of a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` was unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like))
    }
}

pub(crate) fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Numpy-style broadcast of two shapes, aligned on the right.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For each flat index of `out`, the flat index of the broadcast source `inp`.
pub(crate) fn broadcast_offsets(out: &[usize], inp: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..inp.len()).rev() {
        let oi = i + rank - inp.len();
        strides[oi] = if inp[i] == 1 { 0 } else { acc };
        acc *= inp[i];
    }
    let n: usize = out.iter().product();
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    offsets
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
pub(crate) fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(shape_err(op, format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}
