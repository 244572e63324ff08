//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation as a node in creation order, so the
//! node list is already topologically sorted. [`Tape::backward`] walks it
//! once in reverse and accumulates gradients additively into each input.

use std::sync::Arc;

use rand::Rng;

use super::{kernels, sigmoid, softplus, Activation, Scalar, Tensor};
use crate::error::{NgnnError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse `num_dst x num_src` matrix in CSR form, one row per destination.
///
/// `values` may be empty when the matrix is only used as an edge pattern
/// (see [`Tape::edge_aggregate`]).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdj<T> {
    pub num_dst: usize,
    pub num_src: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseAdj<T> {
    pub fn new(
        num_dst: usize,
        num_src: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        let adj = SparseAdj {
            num_dst,
            num_src,
            offsets,
            indices,
            values,
        };
        adj.validate()?;
        Ok(adj)
    }

    fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(NgnnError::shape("SparseAdj", d));
        if self.offsets.len() != self.num_dst + 1 || self.offsets[0] != 0 {
            return bad(format!("offsets length {}", self.offsets.len()));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("offsets decrease".into());
        }
        if *self.offsets.last().unwrap() != self.indices.len() {
            return bad("offsets do not cover indices".into());
        }
        if !self.values.is_empty() && self.values.len() != self.indices.len() {
            return bad("values/indices length differ".into());
        }
        if let Some(&i) = self.indices.iter().find(|&&i| i >= self.num_src) {
            return bad(format!("source index {i} >= {}", self.num_src));
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.indices.len()
    }

    /// Destination row of every edge, in edge order.
    pub fn edge_dst(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.indices.len());
        for d in 0..self.num_dst {
            out.extend(std::iter::repeat_n(d, self.offsets[d + 1] - self.offsets[d]));
        }
        out
    }

    /// Dense `num_dst x num_src` equivalent.
    pub fn to_dense(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(self.num_dst, self.num_src);
        for d in 0..self.num_dst {
            for e in self.offsets[d]..self.offsets[d + 1] {
                let s = self.indices[e];
                let v = t.get(d, s) + self.values[e];
                t.set(d, s, v);
            }
        }
        t
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Act(Var, Activation),
    LeakyRelu(Var, T),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    SpMM(Var, Arc<SparseAdj<T>>),
    EdgeAggregate {
        weights: Var,
        x: Var,
        adj: Arc<SparseAdj<T>>,
    },
    SegmentSoftmax(Var, Arc<[usize]>),
    RowSum(Var),
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
        probs: Tensor<T>,
    },
    BceWithLogits {
        scores: Var,
        targets: Arc<[T]>,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of a forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records an input tensor. Leaves with `requires_grad` receive a gradient
    /// on [`Tape::backward`], zeros if unreachable from the loss.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(NgnnError::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::from_vec(x.rows(), x.cols(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let value = Tensor::from_vec(x.rows(), x.cols(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x n` bias to every row of an `m x n` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(NgnnError::shape(
                "add_bias",
                format!("bias {:?} for input {:?}", bv.shape(), xv.shape()),
            ));
        }
        let mut value = xv.clone();
        let b = bv.data();
        if !b.is_empty() {
            for row in value.data_mut().chunks_exact_mut(b.len()) {
                for (o, &bb) in row.iter_mut().zip(b) {
                    *o += bb;
                }
            }
        }
        let rg = self.needs(&[x, bias]);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::of(factor);
        let value = self.value(x).map(|v| v * f);
        let rg = self.needs(&[x]);
        self.push(value, Op::Scale(x, f), rg)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        if kind == Activation::Identity {
            // Pass-through still gets its own node so the graph shape does not
            // depend on the activation choice.
            let value = self.value(x).clone();
            let rg = self.needs(&[x]);
            return self.push(value, Op::Act(x, kind), rg);
        }
        let value = self.value(x).map(|v| kind.apply(v));
        let rg = self.needs(&[x]);
        self.push(value, Op::Act(x, kind), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::of(slope);
        let value = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { v * s });
        let rg = self.needs(&[x]);
        self.push(value, Op::LeakyRelu(x, s), rg)
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NgnnError::Empty("concat_cols"));
        };
        let rows = self.value(first).rows();
        if let Some(p) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(NgnnError::shape(
                "concat_cols",
                format!("{} rows vs {rows}", self.value(*p).rows()),
            ));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Rows of `x` at `idx` (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: impl Into<Arc<[usize]>>) -> Result<Var> {
        let idx: Arc<[usize]> = idx.into();
        let xv = self.value(x);
        if let Some(&i) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(NgnnError::shape(
                "gather_rows",
                format!("row {i} of a {}-row tensor", xv.rows()),
            ));
        }
        let value = xv.select_rows(&idx);
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::GatherRows(x, idx), rg))
    }

    /// Sparse-dense product `adj . x` with constant sparse weights.
    pub fn spmm(&mut self, adj: &Arc<SparseAdj<T>>, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != adj.num_src || adj.values.len() != adj.indices.len() {
            return Err(NgnnError::shape(
                "spmm",
                format!(
                    "{}x{} adjacency ({} values) with {:?} input",
                    adj.num_dst,
                    adj.num_src,
                    adj.values.len(),
                    xv.shape()
                ),
            ));
        }
        let cols = xv.cols();
        let mut value = Tensor::zeros(adj.num_dst, cols);
        for d in 0..adj.num_dst {
            let out = value.row_mut(d);
            for e in adj.offsets[d]..adj.offsets[d + 1] {
                let w = adj.values[e];
                for (o, &v) in out.iter_mut().zip(xv.row(adj.indices[e])) {
                    *o += w * v;
                }
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::SpMM(x, Arc::clone(adj)), rg))
    }

    /// `out[d] = sum_e weights[e] * x[src(e)]` over the edges of `adj`, with
    /// per-edge weights taken from the `num_edges x 1` tensor `weights`.
    pub fn edge_aggregate(&mut self, adj: &Arc<SparseAdj<T>>, weights: Var, x: Var) -> Result<Var> {
        let (wv, xv) = (self.value(weights), self.value(x));
        if wv.shape() != (adj.num_edges(), 1) || xv.rows() != adj.num_src {
            return Err(NgnnError::shape(
                "edge_aggregate",
                format!(
                    "{} edges / {} sources, weights {:?}, input {:?}",
                    adj.num_edges(),
                    adj.num_src,
                    wv.shape(),
                    xv.shape()
                ),
            ));
        }
        let mut value = Tensor::zeros(adj.num_dst, xv.cols());
        for d in 0..adj.num_dst {
            let out = value.row_mut(d);
            for e in adj.offsets[d]..adj.offsets[d + 1] {
                let w = wv.data()[e];
                for (o, &v) in out.iter_mut().zip(xv.row(adj.indices[e])) {
                    *o += w * v;
                }
            }
        }
        let rg = self.needs(&[weights, x]);
        Ok(self.push(
            value,
            Op::EdgeAggregate {
                weights,
                x,
                adj: Arc::clone(adj),
            },
            rg,
        ))
    }

    /// Softmax of a column vector within each segment
    /// `offsets[i]..offsets[i + 1]`.
    pub fn segment_softmax(&mut self, x: Var, offsets: impl Into<Arc<[usize]>>) -> Result<Var> {
        let offsets: Arc<[usize]> = offsets.into();
        let xv = self.value(x);
        if xv.cols() != 1 || offsets.last().copied() != Some(xv.rows()) {
            return Err(NgnnError::shape(
                "segment_softmax",
                format!("input {:?} with {} offsets", xv.shape(), offsets.len()),
            ));
        }
        let mut value = xv.clone();
        let out = value.data_mut();
        for w in offsets.windows(2) {
            let seg = &mut out[w[0]..w[1]];
            if seg.is_empty() {
                continue;
            }
            let max = seg.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in seg.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in seg.iter_mut() {
                *v = *v / total;
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::SegmentSoftmax(x, offsets), rg))
    }

    /// Per-row sum, giving an `m x 1` tensor.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let value = Tensor::from_fn(xv.rows(), 1, |r, _| xv.row(r).iter().copied().sum());
        let rg = self.needs(&[x]);
        self.push(value, Op::RowSum(x), rg)
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(value, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Inverted dropout: zeroes entries with probability `p` and scales the
    /// survivors by `1 / (1 - p)`. A no-op when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(NgnnError::Config(format!("dropout probability {p} >= 1")));
        }
        let (rows, cols) = self.value(x).shape();
        let keep = T::of(1.0 / (1.0 - p));
        let mask = Tensor::from_fn(rows, cols, |_, _| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        });
        let m = self.constant(mask);
        self.mul(x, m)
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (m, c) = lv.shape();
        if labels.len() != m {
            return Err(NgnnError::shape(
                "softmax_cross_entropy",
                format!("{} labels for {m} rows", labels.len()),
            ));
        }
        if m == 0 {
            return Err(NgnnError::Empty("softmax_cross_entropy"));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= c) {
            return Err(NgnnError::LabelOutOfRange { label, classes: c });
        }
        let mut probs = lv.clone();
        let mut loss = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = probs.row_mut(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            let lse = max + total.ln();
            loss += lse - lv.get(r, label);
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let value = Tensor::scalar(loss / T::of(m as f64));
        let rg = self.needs(&[logits]);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.into(),
                probs,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of `m x 1` logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, scores: Var, targets: &[T]) -> Result<Var> {
        let sv = self.value(scores);
        if sv.cols() != 1 || sv.rows() != targets.len() {
            return Err(NgnnError::shape(
                "bce_with_logits",
                format!("scores {:?} with {} targets", sv.shape(), targets.len()),
            ));
        }
        if targets.is_empty() {
            return Err(NgnnError::Empty("bce_with_logits"));
        }
        let total: T = sv
            .data()
            .iter()
            .zip(targets)
            .map(|(&s, &t)| softplus(s) - s * t)
            .sum();
        let value = Tensor::scalar(total / T::of(targets.len() as f64));
        let rg = self.needs(&[scores]);
        Ok(self.push(
            value,
            Op::BceWithLogits {
                scores,
                targets: targets.into(),
            },
            rg,
        ))
    }

    /// Populates gradients of the scalar `loss` for every node that requires
    /// them. Gradients from earlier calls are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(NgnnError::NotScalar {
                op: "backward",
                rows,
                cols,
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                let (r, c) = node.value.shape();
                grads[i] = Some(Tensor::zeros(r, c));
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    let slot = slot(grads, *a, av);
                    kernels::matmul_nt_acc(g, bv, slot);
                }
                if wants(*b) {
                    let slot = slot(grads, *b, bv);
                    kernels::matmul_tn_acc(av, g, slot);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        axpy(slot(grads, v, g), g, T::one());
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    let s = slot(grads, *a, av);
                    for ((o, &gg), &y) in s.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gg * y;
                    }
                }
                if wants(*b) {
                    let s = slot(grads, *b, bv);
                    for ((o, &gg), &x) in s.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gg * x;
                    }
                }
            }
            Op::AddBias(x, b) => {
                if wants(*x) {
                    axpy(slot(grads, *x, g), g, T::one());
                }
                if wants(*b) {
                    let s = slot(grads, *b, self.value(*b));
                    let cols = g.cols();
                    if cols > 0 {
                        for row in g.data().chunks_exact(cols) {
                            for (o, &gg) in s.data_mut().iter_mut().zip(row) {
                                *o += gg;
                            }
                        }
                    }
                }
            }
            Op::Scale(x, f) => {
                if wants(*x) {
                    axpy(slot(grads, *x, g), g, *f);
                }
            }
            Op::Act(x, kind) => {
                if wants(*x) {
                    let xv = self.value(*x);
                    let s = slot(grads, *x, xv);
                    let it = s
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(xv.data().iter().zip(node.value.data()));
                    for ((o, &gg), (&xi, &yi)) in it {
                        *o += gg * kind.derivative(xi, yi);
                    }
                }
            }
            Op::LeakyRelu(x, slope) => {
                if wants(*x) {
                    let xv = self.value(*x);
                    let s = slot(grads, *x, xv);
                    for ((o, &gg), &xi) in s.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *o += if xi > T::zero() { gg } else { gg * *slope };
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let w = pv.cols();
                    if wants(*p) {
                        let s = slot(grads, *p, pv);
                        for r in 0..pv.rows() {
                            let src = &g.row(r)[offset..offset + w];
                            for (o, &gg) in s.row_mut(r).iter_mut().zip(src) {
                                *o += gg;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::GatherRows(x, idx) => {
                if wants(*x) {
                    let s = slot(grads, *x, self.value(*x));
                    for (r, &src) in idx.iter().enumerate() {
                        for (o, &gg) in s.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += gg;
                        }
                    }
                }
            }
            Op::SpMM(x, adj) => {
                if wants(*x) {
                    let s = slot(grads, *x, self.value(*x));
                    for d in 0..adj.num_dst {
                        let gd = g.row(d);
                        for e in adj.offsets[d]..adj.offsets[d + 1] {
                            let w = adj.values[e];
                            for (o, &gg) in s.row_mut(adj.indices[e]).iter_mut().zip(gd) {
                                *o += w * gg;
                            }
                        }
                    }
                }
            }
            Op::EdgeAggregate { weights, x, adj } => {
                let (wv, xv) = (self.value(*weights), self.value(*x));
                if wants(*weights) {
                    let s = slot(grads, *weights, wv);
                    for d in 0..adj.num_dst {
                        let gd = g.row(d);
                        for e in adj.offsets[d]..adj.offsets[d + 1] {
                            let dot: T = gd
                                .iter()
                                .zip(xv.row(adj.indices[e]))
                                .map(|(&a, &b)| a * b)
                                .sum();
                            s.data_mut()[e] += dot;
                        }
                    }
                }
                if wants(*x) {
                    let s = slot(grads, *x, xv);
                    for d in 0..adj.num_dst {
                        let gd = g.row(d);
                        for e in adj.offsets[d]..adj.offsets[d + 1] {
                            let w = wv.data()[e];
                            for (o, &gg) in s.row_mut(adj.indices[e]).iter_mut().zip(gd) {
                                *o += w * gg;
                            }
                        }
                    }
                }
            }
            Op::SegmentSoftmax(x, offsets) => {
                if wants(*x) {
                    let y = node.value.data();
                    let s = slot(grads, *x, self.value(*x));
                    for w in offsets.windows(2) {
                        let (lo, hi) = (w[0], w[1]);
                        let dot: T = (lo..hi).map(|e| y[e] * g.data()[e]).sum();
                        for e in lo..hi {
                            s.data_mut()[e] += y[e] * (g.data()[e] - dot);
                        }
                    }
                }
            }
            Op::RowSum(x) => {
                if wants(*x) {
                    let s = slot(grads, *x, self.value(*x));
                    for r in 0..s.rows() {
                        let gg = g.data()[r];
                        for o in s.row_mut(r) {
                            *o += gg;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    let gg = g.data()[0];
                    for o in slot(grads, *x, self.value(*x)).data_mut() {
                        *o += gg;
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                if wants(*logits) {
                    let m = labels.len();
                    let scale = g.data()[0] / T::of(m as f64);
                    let s = slot(grads, *logits, probs);
                    for (r, &label) in labels.iter().enumerate() {
                        let row = s.row_mut(r);
                        for (o, &p) in row.iter_mut().zip(probs.row(r)) {
                            *o += p * scale;
                        }
                        row[label] -= scale;
                    }
                }
            }
            Op::BceWithLogits { scores, targets } => {
                if wants(*scores) {
                    let sv = self.value(*scores);
                    let scale = g.data()[0] / T::of(targets.len() as f64);
                    let s = slot(grads, *scores, sv);
                    for ((o, &x), &t) in s.data_mut().iter_mut().zip(sv.data()).zip(targets.iter()) {
                        *o += (sigmoid(x) - t) * scale;
                    }
                }
            }
        }
    }
}

/// Gradient accumulator for `v`, allocated with `like`'s shape on first use.
fn slot<'a, T: Scalar>(
    grads: &'a mut [Option<Tensor<T>>],
    v: Var,
    like: &Tensor<T>,
) -> &'a mut Tensor<T> {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}

fn axpy<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>, alpha: T) {
    for (o, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *o += alpha * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(rows, cols, 1.0, &mut rng)
    }

    #[test]
    fn sum_grad_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(rand_t(3, 2, 1));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &Tensor::full(3, 2, 1.0));
    }

    #[test]
    fn unused_param_gets_zero_grad() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(rand_t(2, 2, 1));
        let unused = tape.param(rand_t(4, 1, 2));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(unused).unwrap(), &Tensor::zeros(4, 1));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(rand_t(2, 2, 1));
        assert!(matches!(tape.backward(x), Err(NgnnError::NotScalar { .. })));
    }

    #[test]
    fn shared_subexpression_doubles_gradient() {
        let w = rand_t(3, 3, 7);
        let x = rand_t(4, 3, 8);

        let mut once = Tape::<f64>::new();
        let xv = once.constant(x.clone());
        let wv = once.param(w.clone());
        let h = once.matmul(xv, wv).unwrap();
        let h = once.sigmoid(h);
        let l = once.sum(h);
        once.backward(l).unwrap();
        let single = once.grad(wv).unwrap().clone();

        let mut twice = Tape::<f64>::new();
        let xv = twice.constant(x);
        let wv = twice.param(w);
        let h = twice.matmul(xv, wv).unwrap();
        let h = twice.sigmoid(h);
        let both = twice.add(h, h).unwrap();
        let l = twice.sum(both);
        twice.backward(l).unwrap();
        let doubled = single.map(|v| 2.0 * v);
        assert!(twice.grad(wv).unwrap().max_abs_diff(&doubled) < 1e-12);
    }

    #[test]
    fn backward_is_linear_in_upstream_scale() {
        let x = rand_t(3, 4, 3);
        let grad_at = |factor: f64| {
            let mut tape = Tape::<f64>::new();
            let xv = tape.param(x.clone());
            let h = tape.sigmoid(xv);
            let s = tape.sum(h);
            let l = tape.scale(s, factor);
            tape.backward(l).unwrap();
            tape.grad(xv).unwrap().clone()
        };
        let base = grad_at(1.0);
        let tripled = grad_at(3.0);
        assert!(tripled.max_abs_diff(&base.map(|v| 3.0 * v)) < 1e-12);
    }

    #[test]
    fn add_bias_broadcasts() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_rows(&[[1.0, 1.0]]));
        let b = tape.constant(Tensor::from_rows(&[[2.0, 3.0]]));
        let y = tape.add_bias(x, b).unwrap();
        assert_eq!(tape.value(y), &Tensor::from_rows(&[[3.0, 4.0]]));

        let mut tape = Tape::<f64>::new();
        let x = tape.constant(rand_t(3, 2, 4));
        let z = tape.constant(Tensor::zeros(1, 2));
        let y = tape.add_bias(x, z).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        let bad = tape.constant(Tensor::zeros(1, 3));
        assert!(tape.add_bias(x, bad).is_err());
    }

    #[test]
    fn bias_grad_is_column_sum_of_upstream() {
        let upstream = rand_t(5, 3, 11);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(rand_t(5, 3, 12));
        let b = tape.param(rand_t(1, 3, 13));
        let y = tape.add_bias(x, b).unwrap();
        let u = tape.constant(upstream.clone());
        let yu = tape.mul(y, u).unwrap();
        let l = tape.sum(yu);
        tape.backward(l).unwrap();
        let expected = Tensor::from_fn(1, 3, |_, c| (0..5).map(|r| upstream.get(r, c)).sum());
        assert!(tape.grad(b).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn cross_entropy_values() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::from_rows(&[[0.0, 0.0]]));
        let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
        assert!((tape.value(l).get(0, 0) - std::f64::consts::LN_2).abs() < 1e-12);

        let z = tape.constant(Tensor::from_rows(&[[1000.0, 0.0]]));
        let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
        let v = tape.value(l).get(0, 0);
        assert!(v.is_finite() && v.abs() < 1e-12);

        let z = tape.constant(Tensor::from_rows(&[[0.0, 0.0]]));
        assert!(matches!(
            tape.softmax_cross_entropy(z, &[2]),
            Err(NgnnError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn bce_values() {
        let mut tape = Tape::<f64>::new();
        let s = tape.constant(Tensor::from_rows(&[[0.0]]));
        let pos = tape.bce_with_logits(s, &[1.0]).unwrap();
        let neg = tape.bce_with_logits(s, &[0.0]).unwrap();
        assert!((tape.value(pos).get(0, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((tape.value(neg).get(0, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        let big = tape.constant(Tensor::from_rows(&[[1e4], [-1e4]]));
        let l = tape.bce_with_logits(big, &[0.0, 1.0]).unwrap();
        assert!(tape.value(l).is_finite());
    }

    #[test]
    fn finite_difference_suite() {
        let a = rand_t(5, 4, 21);
        let b = rand_t(4, 3, 22);
        let err = finite_diff_check(
            |t, x| {
                let bv = t.constant(b.clone());
                let y = t.matmul(x, bv)?;
                let y = t.sigmoid(y);
                Ok(t.sum(y))
            },
            &a,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "matmul lhs {err}");
        let err = finite_diff_check(
            |t, x| {
                let av = t.constant(a.clone());
                let y = t.matmul(av, x)?;
                let y = t.sigmoid(y);
                Ok(t.sum(y))
            },
            &b,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "matmul rhs {err}");

        let logits = rand_t(4, 3, 23).map(|v| 3.0 * v);
        let err = finite_diff_check(
            |t, x| t.softmax_cross_entropy(x, &[0, 2, 1, 2]),
            &logits,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "cross entropy {err}");

        let scores = rand_t(6, 1, 24).map(|v| 4.0 * v);
        let err = finite_diff_check(
            |t, x| t.bce_with_logits(x, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]),
            &scores,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "bce {err}");

        let bias = rand_t(1, 3, 25);
        let x = rand_t(5, 3, 26);
        let up = rand_t(5, 3, 27);
        let err = finite_diff_check(
            |t, bv| {
                let xv = t.constant(x.clone());
                let y = t.add_bias(xv, bv)?;
                let u = t.constant(up.clone());
                let y = t.mul(y, u)?;
                Ok(t.sum(y))
            },
            &bias,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "bias {err}");
    }

    #[test]
    fn sparse_and_attention_ops_pass_gradient_check() {
        let adj = Arc::new(
            SparseAdj::new(
                3,
                4,
                vec![0, 2, 3, 6],
                vec![0, 3, 1, 0, 2, 3],
                vec![0.5, 1.5, -1.0, 0.25, 2.0, 0.75],
            )
            .unwrap(),
        );
        let x = rand_t(4, 3, 31);
        let err = finite_diff_check(
            |t, xv| {
                let y = t.spmm(&adj, xv)?;
                let y = t.sigmoid(y);
                Ok(t.sum(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "spmm {err}");

        let scores = rand_t(6, 1, 32);
        let offsets: Arc<[usize]> = adj.offsets.clone().into();
        let up = rand_t(3, 3, 33);
        let err = finite_diff_check(
            |t, sv| {
                let a = t.leaky_relu(sv, 0.2);
                let a = t.segment_softmax(a, Arc::clone(&offsets))?;
                let xv = t.constant(x.clone());
                let y = t.edge_aggregate(&adj, a, xv)?;
                let u = t.constant(up.clone());
                let y = t.mul(y, u)?;
                Ok(t.sum(y))
            },
            &scores,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "attention weights {err}");

        let w = rand_t(6, 1, 34);
        let err = finite_diff_check(
            |t, xv| {
                let wv = t.constant(w.clone());
                let y = t.edge_aggregate(&adj, wv, xv)?;
                let g = t.gather_rows(y, vec![2, 0, 2])?;
                let c = t.concat_cols(&[g, g])?;
                let r = t.row_sum(c);
                let r = t.sigmoid(r);
                Ok(t.sum(r))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "edge aggregate input {err}");
    }

    #[test]
    fn segment_softmax_rows_sum_to_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(rand_t(7, 1, 40).map(|v| 50.0 * v));
        let y = tape.segment_softmax(x, vec![0, 3, 3, 7]).unwrap();
        let v = tape.value(y).data();
        assert!((v[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((v[3..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(50, 40, 1.0));
        assert_eq!(tape.dropout(x, 0.0, &mut rng).unwrap(), x);
        let y = tape.dropout(x, 0.5, &mut rng).unwrap();
        let v = tape.value(y);
        assert!(v.data().iter().all(|&e| e == 0.0 || e == 2.0));
        let mean = v.sum() / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.1);
    }

    #[test]
    fn sparse_adj_validation() {
        assert!(SparseAdj::<f32>::new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseAdj::<f32>::new(1, 2, vec![0, 1], vec![5], vec![1.0]).is_err());
        assert!(SparseAdj::<f32>::new(1, 2, vec![0, 1], vec![1], vec![]).is_ok());
    }
}
