//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles during a
//! forward pass. [`Tape::backward`] replays the tape in reverse and returns a
//! [`GradientMap`] holding the gradient of a scalar loss with respect to every
//! named parameter that was registered with [`Tape::param`].
//!
//! The tape is consumed by `backward`, so a graph is freed as soon as its
//! gradients have been extracted. Values can be read at any time before that
//! with [`Tape::value`].
//!
//! Most ops work on the trailing axis of tensors of any rank: `matmul` treats
//! `[..., p]` as a stack of rows, `layer_norm` normalizes the last axis, and
//! the sequence ops (`concat_seq`, `slice_seq`, `attention`) expect
//! `[batch, time, features]`.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{
    axis_split, check_layer_norm, layer_norm_kernel, matmul_dims, matmul_kernel, softmax_kernel,
    Tensor, PROB_FLOOR,
};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    tape: u64,
}

/// Target of a cross-entropy term.
#[derive(Clone, Debug)]
pub enum CeTarget {
    /// One class index per row of the prediction.
    Hard(Vec<usize>),
    /// A distribution per row, shaped like the prediction.
    Soft(Var),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sum(Var),
    MeanAxis {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatSeq(Var, Var),
    SliceSeq {
        x: Var,
        start: usize,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        weights: Vec<f64>,
    },
    CrossEntropy {
        pred: Var,
        target: CeTarget,
    },
    Mse(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    params: Vec<(usize, String)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a named trainable parameter. Gradients are reported under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        let var = self.push(value, Op::Leaf, true);
        self.params.push((var.idx, name.into()));
        var
    }

    /// Records a value that takes no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Stop-gradient: a constant copy of `x`'s current value.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.idx].value.clone();
        self.constant(value)
    }

    pub fn value(&self, x: Var) -> &Tensor {
        &self.nodes[x.idx].value
    }

    pub fn shape(&self, x: Var) -> &[usize] {
        self.nodes[x.idx].value.shape()
    }

    /// Fingerprint of every non-differentiable branch taken so far: the sign
    /// of each ReLU input and whether each hard cross-entropy probability hit
    /// the clamp floor. Two evaluations with equal patterns lie on the same
    /// smooth piece of the function.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in self.data(*x) {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                Op::CrossEntropy {
                    pred,
                    target: CeTarget::Hard(idx),
                } => {
                    let p = self.data(*pred);
                    let classes = self.value(*pred).cols();
                    for (r, c) in idx.iter().enumerate() {
                        (p[r * classes + c] < PROB_FLOOR).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            idx: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.idx].requires_grad)
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        if vars.iter().all(|v| v.tape == self.id && v.idx < self.nodes.len()) {
            Ok(())
        } else {
            Err(Error::DetachedGraph)
        }
    }

    fn data(&self, x: Var) -> &[f64] {
        self.nodes[x.idx].value.data()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (rows, inner, n) = matmul_dims(self.shape(a), self.shape(b))?;
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = n;
        let out = matmul_kernel(self.data(a), self.data(b), rows, inner, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(&[a, b])?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        self.push(Tensor::from_parts(shape, out), op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// `a + b` where `b`'s shape is a suffix of `a`'s (bias rows, positional tables).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape("add_broadcast", sa, sb));
        }
        let bd = self.data(b);
        let out = self
            .data(a)
            .chunks_exact(bd.len())
            .flat_map(|chunk| chunk.iter().zip(bd).map(|(x, y)| x + y))
            .collect();
        let shape = sa.to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::AddBroadcast(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check(&[x])?;
        let out = self.data(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Scale(x, c), rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let out = self.data(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Relu(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let s = self.data(x).iter().sum();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), rg))
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check(&[x])?;
        let (outer, len, inner) = axis_split("mean_axis", self.shape(x), axis)?;
        let xd = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = &xd[(o * len + j) * inner..(o * len + j + 1) * inner];
                for (acc, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        for v in &mut out {
            *v /= len as f64;
        }
        let mut shape = self.shape(x).to_vec();
        shape.remove(axis);
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::MeanAxis {
                x,
                outer,
                len,
                inner,
            },
            rg,
        ))
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check(&[x])?;
        let (outer, len, inner) = axis_split("softmax", self.shape(x), axis)?;
        let out = softmax_kernel(self.data(x), outer, len, inner);
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            },
            rg,
        ))
    }

    /// Normalizes the trailing axis, then applies `gamma ⊙ · + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.check(&[x, gamma, beta])?;
        check_layer_norm(self.shape(x), self.shape(gamma), self.shape(beta), eps)?;
        let d = self.value(x).cols();
        let (out, xhat, inv_std) =
            layer_norm_kernel(self.data(x), self.data(gamma), self.data(beta), d, eps);
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Appends the rows of `tokens[L, d]` to every sequence of `x[B, T, d]`.
    pub fn concat_seq(&mut self, x: Var, tokens: Var) -> Result<Var> {
        self.check(&[x, tokens])?;
        let (sx, st) = (self.shape(x), self.shape(tokens));
        if sx.len() != 3 || st.len() != 2 || sx[2] != st[1] {
            return Err(Error::shape("concat_seq", sx, st));
        }
        let (b, t, d, l) = (sx[0], sx[1], sx[2], st[0]);
        let mut out = Vec::with_capacity(b * (t + l) * d);
        for seq in self.data(x).chunks_exact(t * d) {
            out.extend_from_slice(seq);
            out.extend_from_slice(self.data(tokens));
        }
        let rg = self.rg(&[x, tokens]);
        Ok(self.push(
            Tensor::from_parts(vec![b, t + l, d], out),
            Op::ConcatSeq(x, tokens),
            rg,
        ))
    }

    /// Rows `start..start + len` of every sequence in `x[B, T, d]`.
    pub fn slice_seq(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(&[x])?;
        let sx = self.shape(x);
        if sx.len() != 3 || len == 0 || start + len > sx[1] {
            return Err(Error::InvalidArgument(format!(
                "slice_seq: rows {start}..{} out of range for shape {sx:?}",
                start + len
            )));
        }
        let (b, t, d) = (sx[0], sx[1], sx[2]);
        let mut out = Vec::with_capacity(b * len * d);
        for seq in self.data(x).chunks_exact(t * d) {
            out.extend_from_slice(&seq[start * d..(start + len) * d]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::from_parts(vec![b, len, d], out),
            Op::SliceSeq { x, start },
            rg,
        ))
    }

    /// Multi-head scaled dot-product attention over `[B, T, d]` projections.
    ///
    /// Each head of width `d / heads` computes `softmax(Q Kᵀ / √(d/heads)) V`;
    /// head outputs are concatenated back along the feature axis.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let s = self.shape(q);
        if s.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "attention: expected [batch, time, features], got {s:?}"
            )));
        }
        let (b, t, d) = (s[0], s[1], s[2]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "attention: model width {d} not divisible by {heads} heads"
            )));
        }
        let (out, weights) = attention_forward(self.data(q), self.data(k), self.data(v), b, t, d, heads);
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(
            Tensor::from_parts(vec![b, t, d], out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                weights,
            },
            rg,
        ))
    }

    /// Mean over rows of `−Σ_c target_c · ln(max(pred_c, 1e−12))`.
    ///
    /// `pred` is `[A]` or `[B, A]`. A hard target carries one index per row.
    pub fn cross_entropy(&mut self, pred: Var, target: CeTarget) -> Result<Var> {
        self.check(&[pred])?;
        let classes = self.value(pred).cols();
        let rows = self.value(pred).rows();
        let p = self.data(pred);
        let total = match &target {
            CeTarget::Hard(idx) => {
                if idx.len() != rows {
                    return Err(Error::shape("cross_entropy", &[rows], &[idx.len()]));
                }
                let mut total = 0.0;
                for (r, &c) in idx.iter().enumerate() {
                    if c >= classes {
                        return Err(Error::ClassOutOfRange { index: c, classes });
                    }
                    total -= p[r * classes + c].max(PROB_FLOOR).ln();
                }
                total
            }
            CeTarget::Soft(t) => {
                self.check(&[*t])?;
                if self.shape(*t) != self.shape(pred) {
                    return Err(Error::shape("cross_entropy", self.shape(pred), self.shape(*t)));
                }
                -p.iter()
                    .zip(self.data(*t))
                    .map(|(&pc, &tc)| if tc == 0.0 { 0.0 } else { tc * pc.max(PROB_FLOOR).ln() })
                    .sum::<f64>()
            }
        };
        let mut rg = self.rg(&[pred]);
        if let CeTarget::Soft(t) = &target {
            rg |= self.rg(&[*t]);
        }
        Ok(self.push(
            Tensor::scalar(total / rows as f64),
            Op::CrossEntropy { pred, target },
            rg,
        ))
    }

    /// Mean over all elements of `(a − b)²`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let n = self.value(a).numel() as f64;
        let s: f64 = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a, b), rg))
    }

    /// Reverse pass from a scalar `loss`; consumes the tape.
    pub fn backward(self, loss: Var) -> Result<GradientMap> {
        self.check(&[loss])?;
        let loss_value = &self.nodes[loss.idx].value;
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.idx + 1, || None);
        if self.nodes[loss.idx].requires_grad {
            grads[loss.idx] = Some(vec![1.0]);
        }
        for idx in (0..=loss.idx).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        let mut map = GradientMap::default();
        for (idx, name) in self.params {
            if let Some(g) = grads.get_mut(idx).and_then(Option::take) {
                let shape = self.nodes[idx].value.shape().to_vec();
                map.accumulate(name, Tensor::from_parts(shape, g));
            }
        }
        Ok(map)
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.idx].value.data();
        let wants = |v: Var| self.nodes[v.idx].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (rows, inner, n) =
                    matmul_dims(self.nodes[a.idx].value.shape(), self.nodes[b.idx].value.shape())
                        .expect("recorded shapes");
                if wants(*a) {
                    let bd = val(*b);
                    let da = acc(grads, *a, rows * inner);
                    for (g_row, da_row) in g.chunks_exact(n).zip(da.chunks_exact_mut(inner)) {
                        for (dv, b_row) in da_row.iter_mut().zip(bd.chunks_exact(n)) {
                            *dv += dot(g_row, b_row);
                        }
                    }
                }
                if wants(*b) {
                    let ad = val(*a);
                    let db = acc(grads, *b, inner * n);
                    for (a_row, g_row) in ad.chunks_exact(inner).zip(g.chunks_exact(n)) {
                        for (&av, db_row) in a_row.iter().zip(db.chunks_exact_mut(n)) {
                            for (d, &gv) in db_row.iter_mut().zip(g_row) {
                                *d += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        add_into(acc(grads, v, g.len()), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    add_into(acc(grads, *a, g.len()), g);
                }
                if wants(*b) {
                    for (d, &gv) in acc(grads, *b, g.len()).iter_mut().zip(g) {
                        *d -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                for (x, other) in [(*a, *b), (*b, *a)] {
                    if wants(x) {
                        let od = val(other);
                        for ((d, &gv), &o) in acc(grads, x, g.len()).iter_mut().zip(g).zip(od) {
                            *d += gv * o;
                        }
                    }
                }
            }
            Op::AddBroadcast(a, b) => {
                if wants(*a) {
                    add_into(acc(grads, *a, g.len()), g);
                }
                if wants(*b) {
                    let n = val(*b).len();
                    let db = acc(grads, *b, n);
                    for chunk in g.chunks_exact(n) {
                        add_into(db, chunk);
                    }
                }
            }
            Op::Scale(x, c) => {
                if wants(*x) {
                    for (d, &gv) in acc(grads, *x, g.len()).iter_mut().zip(g) {
                        *d += c * gv;
                    }
                }
            }
            Op::Relu(x) => {
                if wants(*x) {
                    let xd = val(*x);
                    for ((d, &gv), &xv) in acc(grads, *x, g.len()).iter_mut().zip(g).zip(xd) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    let n = val(*x).len();
                    for d in acc(grads, *x, n).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::MeanAxis {
                x,
                outer,
                len,
                inner,
            } => {
                if wants(*x) {
                    let scale = 1.0 / *len as f64;
                    let dx = acc(grads, *x, outer * len * inner);
                    for o in 0..*outer {
                        let go = &g[o * inner..(o + 1) * inner];
                        for j in 0..*len {
                            let base = (o * len + j) * inner;
                            for (d, &gv) in dx[base..base + inner].iter_mut().zip(go) {
                                *d += gv * scale;
                            }
                        }
                    }
                }
            }
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                if wants(*x) {
                    let y = node.value.data();
                    let dx = acc(grads, *x, y.len());
                    for o in 0..*outer {
                        for i in 0..*inner {
                            let at = |j: usize| o * len * inner + i + j * inner;
                            let s: f64 = (0..*len).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..*len {
                                dx[at(j)] += y[at(j)] * (g[at(j)] - s);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gd = val(*gamma);
                let d = gd.len();
                if wants(*x) {
                    let dx = acc(grads, *x, g.len());
                    let mut dxhat = vec![0.0; d];
                    for (r, ((g_row, h_row), dx_row)) in g
                        .chunks_exact(d)
                        .zip(xhat.chunks_exact(d))
                        .zip(dx.chunks_exact_mut(d))
                        .enumerate()
                    {
                        for j in 0..d {
                            dxhat[j] = g_row[j] * gd[j];
                        }
                        let sum: f64 = dxhat.iter().sum();
                        let dot_h = dot(&dxhat, h_row);
                        let k = inv_std[r] / d as f64;
                        for j in 0..d {
                            dx_row[j] += k * (d as f64 * dxhat[j] - sum - h_row[j] * dot_h);
                        }
                    }
                }
                if wants(*gamma) {
                    let dg = acc(grads, *gamma, d);
                    for (g_row, h_row) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] += g_row[j] * h_row[j];
                        }
                    }
                }
                if wants(*beta) {
                    let db = acc(grads, *beta, d);
                    for g_row in g.chunks_exact(d) {
                        add_into(db, g_row);
                    }
                }
            }
            Op::ConcatSeq(x, tokens) => {
                let xs = self.nodes[x.idx].value.shape();
                let (t, d) = (xs[1], xs[2]);
                let l = self.nodes[tokens.idx].value.shape()[0];
                let seq = (t + l) * d;
                if wants(*x) {
                    let dx = acc(grads, *x, val(*x).len());
                    for (dx_seq, g_seq) in dx.chunks_exact_mut(t * d).zip(g.chunks_exact(seq)) {
                        add_into(dx_seq, &g_seq[..t * d]);
                    }
                }
                if wants(*tokens) {
                    let dt = acc(grads, *tokens, l * d);
                    for g_seq in g.chunks_exact(seq) {
                        add_into(dt, &g_seq[t * d..]);
                    }
                }
            }
            Op::SliceSeq { x, start } => {
                if wants(*x) {
                    let xs = self.nodes[x.idx].value.shape();
                    let (t, d) = (xs[1], xs[2]);
                    let len = node.value.shape()[1];
                    let dx = acc(grads, *x, val(*x).len());
                    for (dx_seq, g_seq) in dx.chunks_exact_mut(t * d).zip(g.chunks_exact(len * d)) {
                        add_into(&mut dx_seq[start * d..(start + len) * d], g_seq);
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                weights,
            } => {
                let s = node.value.shape();
                let (b, t, d) = (s[0], s[1], s[2]);
                let (dq, dk, dv) =
                    attention_backward(val(*q), val(*k), val(*v), weights, g, b, t, d, *heads);
                for (var, grad) in [(*q, dq), (*k, dk), (*v, dv)] {
                    if wants(var) {
                        add_into(acc(grads, var, grad.len()), &grad);
                    }
                }
            }
            Op::CrossEntropy { pred, target } => {
                let p = val(*pred);
                let pv = &self.nodes[pred.idx].value;
                let (rows, classes) = (pv.rows(), pv.cols());
                let scale = g[0] / rows as f64;
                match target {
                    CeTarget::Hard(idx) => {
                        if wants(*pred) {
                            let dp = acc(grads, *pred, p.len());
                            for (r, &c) in idx.iter().enumerate() {
                                let pc = p[r * classes + c];
                                if pc >= PROB_FLOOR {
                                    dp[r * classes + c] -= scale / pc;
                                }
                            }
                        }
                    }
                    CeTarget::Soft(t) => {
                        let td = val(*t);
                        if wants(*pred) {
                            let dp = acc(grads, *pred, p.len());
                            for ((d, &pc), &tc) in dp.iter_mut().zip(p).zip(td) {
                                if pc >= PROB_FLOOR {
                                    *d -= scale * tc / pc;
                                }
                            }
                        }
                        if wants(*t) {
                            let dt = acc(grads, *t, td.len());
                            for (d, &pc) in dt.iter_mut().zip(p) {
                                *d -= scale * pc.max(PROB_FLOOR).ln();
                            }
                        }
                    }
                }
            }
            Op::Mse(a, b) => {
                let (ad, bd) = (val(*a), val(*b));
                let c = 2.0 * g[0] / ad.len() as f64;
                if wants(*a) {
                    for ((d, &x), &y) in acc(grads, *a, ad.len()).iter_mut().zip(ad).zip(bd) {
                        *d += c * (x - y);
                    }
                }
                if wants(*b) {
                    for ((d, &x), &y) in acc(grads, *b, bd.len()).iter_mut().zip(ad).zip(bd) {
                        *d -= c * (x - y);
                    }
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.idx].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns the attended values and the per-head attention weights `[B, H, T, T]`.
pub(crate) fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    b: usize,
    t: usize,
    d: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; b * t * d];
    let mut weights = vec![0.0; b * heads * t * t];
    for bi in 0..b {
        let base = bi * t * d;
        for h in 0..heads {
            let off = h * dh;
            let w = &mut weights[(bi * heads + h) * t * t..(bi * heads + h + 1) * t * t];
            for i in 0..t {
                let qi = &q[base + i * d + off..base + i * d + off + dh];
                let row = &mut w[i * t..(i + 1) * t];
                let mut max = f64::NEG_INFINITY;
                for j in 0..t {
                    let kj = &k[base + j * d + off..base + j * d + off + dh];
                    row[j] = dot(qi, kj) * scale;
                    max = max.max(row[j]);
                }
                let mut sum = 0.0;
                for r in row.iter_mut() {
                    *r = (*r - max).exp();
                    sum += *r;
                }
                for r in row.iter_mut() {
                    *r /= sum;
                }
                let oi = &mut out[base + i * d + off..base + i * d + off + dh];
                for j in 0..t {
                    let vj = &v[base + j * d + off..base + j * d + off + dh];
                    for (o, &vv) in oi.iter_mut().zip(vj) {
                        *o += row[j] * vv;
                    }
                }
            }
        }
    }
    (out, weights)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    weights: &[f64],
    g: &[f64],
    b: usize,
    t: usize,
    d: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; q.len()];
    let mut dk = vec![0.0; k.len()];
    let mut dv = vec![0.0; v.len()];
    let mut ds = vec![0.0; t];
    for bi in 0..b {
        let base = bi * t * d;
        for h in 0..heads {
            let off = h * dh;
            let w = &weights[(bi * heads + h) * t * t..(bi * heads + h + 1) * t * t];
            let at = |row: usize| base + row * d + off..base + row * d + off + dh;
            for i in 0..t {
                let gi = &g[at(i)];
                let wrow = &w[i * t..(i + 1) * t];
                // dP_ij = g_i · v_j ; dV_j += P_ij g_i
                let mut s = 0.0;
                for j in 0..t {
                    ds[j] = dot(gi, &v[at(j)]);
                    s += ds[j] * wrow[j];
                    for (dvv, &gv) in dv[at(j)].iter_mut().zip(gi) {
                        *dvv += wrow[j] * gv;
                    }
                }
                for j in 0..t {
                    let dsj = wrow[j] * (ds[j] - s) * scale;
                    if dsj == 0.0 {
                        continue;
                    }
                    let (qi, kj) = (at(i), at(j));
                    for c in 0..dh {
                        dq[qi.start + c] += dsj * k[kj.start + c];
                        dk[kj.start + c] += dsj * q[qi.start + c];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Gradients keyed by parameter name. Absent entries are zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientMap {
    entries: BTreeMap<String, Tensor>,
}

impl GradientMap {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.entries.insert(name.into(), grad);
    }

    fn accumulate(&mut self, name: String, grad: Tensor) {
        match self.entries.get_mut(&name) {
            Some(existing) => add_into(existing.data_mut(), grad.data()),
            None => {
                self.entries.insert(name, grad);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// `true` when every entry is exactly zero (absent entries count as zero).
    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|t| t.data().iter().all(|&v| v == 0.0))
    }
}
