use std::collections::HashMap;

use super::kernels::{gemm, softmax_rows_in_place, View};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{PotrError, Result};

const NORM_EPS: f64 = 1e-5;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Abs(Var),
    AddRow { x: Var, row: Var },
    SoftmaxRows(Var),
    Transpose(Var),
    Reshape(Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
    BlockLeftMul { a: Var, h: Var, blocks: usize },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

impl Op {
    fn operands(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddRow { x, row } => vec![*x, *row],
            Op::BlockLeftMul { a, h, .. } => vec![*a, *h],
            Op::Scale(x, _)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Abs(x)
            | Op::SoftmaxRows(x)
            | Op::Transpose(x)
            | Op::Reshape(x)
            | Op::SliceRows { x, .. }
            | Op::SliceCols { x, .. }
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::MeanRows(x) => vec![*x],
            Op::LayerNorm { x, gain, bias, .. } | Op::BatchNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::ConcatRows(parts) | Op::ConcatCols(parts) => parts.clone(),
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

/// Statistics a train-mode batch-norm call observed, for running-stat updates.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Wengert-style tape. Nodes are appended in execution order, so operands
/// always precede the nodes that consume them.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn same_shape(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape()
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match op {
            Op::Leaf => value.requires_grad(),
            _ => op.operands().iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn out(&mut self, shape: &[usize], data: Vec<f64>, op: Op) -> Var {
        let t = Tensor::new(shape, data).expect("op produced inconsistent shape");
        self.push(t, op)
    }

    /// Records a leaf. Its `requires_grad` flag decides whether backward
    /// accumulates into it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn variable(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    /// Binds a stored parameter as a leaf, once per graph.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let mut t = store.get(id).clone();
        t.zero_grad();
        let trainable = store.is_trainable(id);
        let v = self.leaf(t.with_requires_grad(trainable));
        self.params.insert(id, v);
        v
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().map(|(&p, &v)| (p, v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        match s.len() {
            1 => Ok((1, s[0])),
            2 => Ok((s[0], s[1])),
            _ => Err(PotrError::shape(op, s, &[])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) · op(b)` where `op` optionally transposes its operand.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (ar, ac) = self.dims2(a, "matmul")?;
        let (br, bc) = self.dims2(b, "matmul")?;
        let va = View::new(self.data(a), ar, ac).maybe_t(ta);
        let vb = View::new(self.data(b), br, bc).maybe_t(tb);
        if va.cols != vb.rows {
            return Err(PotrError::shape("matmul", self.shape(a), self.shape(b)));
        }
        let (m, n) = (va.rows, vb.cols);
        let mut out = vec![0.0; m * n];
        gemm(va, vb, &mut out, false, false);
        Ok(self.out(&[m, n], out, Op::MatMul { a, b, ta, tb }))
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(Vec<usize>, Vec<f64>)> {
        let (ta, tb) = (self.value(a), self.value(b));
        if same_shape(ta, tb) {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Ok((ta.shape().to_vec(), data))
        } else if tb.numel() == 1 {
            let y = tb.data()[0];
            Ok((ta.shape().to_vec(), ta.data().iter().map(|&x| f(x, y)).collect()))
        } else if ta.numel() == 1 {
            let x = ta.data()[0];
            Ok((tb.shape().to_vec(), tb.data().iter().map(|&y| f(x, y)).collect()))
        } else {
            Err(PotrError::shape(op, ta.shape(), tb.shape()))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.out(&s, d, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.out(&s, d, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.out(&s, d, Op::Mul(a, b)))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let shape = t.shape().to_vec();
        let data = t.data().iter().map(|&v| f(v)).collect();
        self.out(&shape, data, op)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    /// Adds a length-`c` row vector to every row of an `r × c` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "add_row")?;
        if self.value(row).numel() != c {
            return Err(PotrError::shape("add_row", self.shape(x), self.shape(row)));
        }
        let rv = self.data(row);
        let mut data = self.data(x).to_vec();
        for chunk in data.chunks_mut(c) {
            chunk.iter_mut().zip(rv).for_each(|(a, b)| *a += b);
        }
        Ok(self.out(&[r, c], data, Op::AddRow { x, row }))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "softmax_rows")?;
        let mut data = self.data(x).to_vec();
        softmax_rows_in_place(&mut data, c);
        Ok(self.out(&[r, c], data, Op::SoftmaxRows(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "transpose")?;
        let src = self.data(x);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.out(&[c, r], data, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(PotrError::shape("reshape", self.shape(x), shape));
        }
        let data = self.data(x).to_vec();
        Ok(self.out(shape, data, Op::Reshape(x)))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "slice_rows")?;
        if len == 0 || start + len > r {
            return Err(PotrError::shape("slice_rows", self.shape(x), &[start, len]));
        }
        let data = self.data(x)[start * c..(start + len) * c].to_vec();
        Ok(self.out(&[len, c], data, Op::SliceRows { x, start }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "slice_cols")?;
        if len == 0 || start + len > c {
            return Err(PotrError::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(r * len);
        for row in src.chunks(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        Ok(self.out(&[r, len], data, Op::SliceCols { x, start }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| PotrError::contract("concat of nothing"))?;
        let (_, c) = self.dims2(first, "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims2(p, "concat_rows")?;
            if pc != c {
                return Err(PotrError::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += pr;
            data.extend_from_slice(self.data(p));
        }
        Ok(self.out(&[rows, c], data, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| PotrError::contract("concat of nothing"))?;
        let (r, _) = self.dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.dims2(p, "concat_cols")?;
            if pr != r {
                return Err(PotrError::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.data(p)[i * w..(i + 1) * w]);
            }
        }
        Ok(self.out(&[r, total], data, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.out(&[1], vec![s], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.out(&[1], vec![s], Op::Mean(x))
    }

    /// Column means of an `r × c` matrix, as a `1 × c` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "mean_rows")?;
        let mut data = vec![0.0; c];
        for row in self.data(x).chunks(c) {
            data.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        data.iter_mut().for_each(|v| *v /= r as f64);
        Ok(self.out(&[1, c], data, Op::MeanRows(x)))
    }

    /// Per-row normalisation over channels followed by an affine map.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "layer_norm")?;
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return Err(PotrError::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let src = self.data(x);
        let (g, b) = (self.data(gain), self.data(bias));
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        Ok(self.out(&[r, c], out, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    /// Column-wise batch normalisation over the rows of `x`.
    ///
    /// With `stats = None` the batch statistics are used and returned so the
    /// caller can update running estimates; with `Some((mean, var))` the given
    /// running statistics are applied instead.
    pub fn batch_norm(&mut self, x: Var, gain: Var, bias: Var, stats: Option<(&[f64], &[f64])>) -> Result<(Var, Option<BatchStats>)> {
        let (r, c) = self.dims2(x, "batch_norm")?;
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return Err(PotrError::shape("batch_norm", self.shape(x), self.shape(gain)));
        }
        let src = self.data(x);
        let (mean, var, observed) = match stats {
            Some((m, v)) => {
                if m.len() != c || v.len() != c {
                    return Err(PotrError::shape("batch_norm", self.shape(x), &[m.len()]));
                }
                (m.to_vec(), v.to_vec(), None)
            }
            None => {
                let mut mean = vec![0.0; c];
                for row in src.chunks(c) {
                    mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                mean.iter_mut().for_each(|m| *m /= r as f64);
                let mut var = vec![0.0; c];
                for row in src.chunks(c) {
                    for j in 0..c {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= r as f64);
                let observed = BatchStats { mean: mean.clone(), var: var.clone() };
                (mean, var, Some(observed))
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let (g, b) = (self.data(gain), self.data(bias));
        let mut xhat = vec![0.0; r * c];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                let h = (src[i * c + j] - mean[j]) * inv_std[j];
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let batch_stats = observed.is_some();
        let v = self.out(&[r, c], out, Op::BatchNorm { x, gain, bias, xhat, inv_std, batch_stats });
        Ok((v, observed))
    }

    /// Left-multiplies every `k × f` row block of `h` by the shared `k × k`
    /// matrix `a`: the batched form of `A · H`.
    pub fn block_left_mul(&mut self, a: Var, h: Var) -> Result<Var> {
        let (k, k2) = self.dims2(a, "block_left_mul")?;
        let (r, f) = self.dims2(h, "block_left_mul")?;
        if k != k2 || r % k != 0 {
            return Err(PotrError::shape("block_left_mul", self.shape(a), self.shape(h)));
        }
        let blocks = r / k;
        let mut out = vec![0.0; r * f];
        let av = View::new(self.data(a), k, k);
        let hd = self.data(h);
        for p in 0..blocks {
            let span = p * k * f..(p + 1) * k * f;
            gemm(av, View::new(&hd[span.clone()], k, f), &mut out[span], false, false);
        }
        Ok(self.out(&[r, f], out, Op::BlockLeftMul { a, h, blocks }))
    }

    /// Mean multi-class cross entropy of `logits` rows against `labels`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2(logits, "cross_entropy")?;
        if labels.len() != r {
            return Err(PotrError::shape("cross_entropy", self.shape(logits), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(PotrError::contract(format!("label {bad} out of range for {c} classes")));
        }
        let src = self.data(logits);
        let mut probs = src.to_vec();
        let mut loss = 0.0;
        for (i, row) in src.chunks(c).enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
        }
        softmax_rows_in_place(&mut probs, c);
        let labels = labels.to_vec();
        Ok(self.out(&[1], vec![loss / r as f64], Op::CrossEntropy { logits, labels, probs }))
    }

    /// Reverse pass from a scalar node. Leaf gradients are accumulated, so
    /// repeated calls add up.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(PotrError::contract(format!(
                "backward requires a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Op::Leaf = node.op {
                grads[i] = Some(gy);
                continue;
            }
            if !node.needs_grad {
                continue;
            }
            self.propagate(i, &gy, &mut grads);
        }
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                let node = &mut self.nodes[i];
                if matches!(node.op, Op::Leaf) && node.value.requires_grad() {
                    node.value.accumulate_grad(&g);
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let len = self.nodes[v.0].value.numel();
            let g = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(g);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (ar, ac) = (self.value(*a).rows(), self.value(*a).cols());
                let (br, bc) = (self.value(*b).rows(), self.value(*b).cols());
                let va = View::new(self.data(*a), ar, ac).maybe_t(*ta);
                let vb = View::new(self.data(*b), br, bc).maybe_t(*tb);
                let vg = View::new(gy, va.rows, vb.cols);
                // d op(A) = dC · op(B)ᵀ, d op(B) = op(A)ᵀ · dC
                acc(*a, &mut |g| gemm(vg, vb.t(), g, *ta, true));
                acc(*b, &mut |g| gemm(va.t(), vg, g, *tb, true));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                for (v, s) in [(*a, 1.0), (*b, sign)] {
                    let n = self.value(v).numel();
                    acc(v, &mut |g| {
                        if n == gy.len() {
                            g.iter_mut().zip(gy).for_each(|(g, d)| *g += s * d);
                        } else {
                            g[0] += s * gy.iter().sum::<f64>();
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                for (v, o) in [(*a, *b), (*b, *a)] {
                    let n = self.value(v).numel();
                    let other = self.data(o);
                    acc(v, &mut |g| {
                        if n == gy.len() {
                            if other.len() == gy.len() {
                                for j in 0..n {
                                    g[j] += gy[j] * other[j];
                                }
                            } else {
                                g.iter_mut().zip(gy).for_each(|(g, d)| *g += d * other[0]);
                            }
                        } else {
                            g[0] += gy.iter().zip(other).map(|(d, o)| d * o).sum::<f64>();
                        }
                    });
                }
            }
            Op::Scale(x, c) => acc(*x, &mut |g| g.iter_mut().zip(gy).for_each(|(g, d)| *g += c * d)),
            Op::Tanh(x) => acc(*x, &mut |g| {
                for j in 0..g.len() {
                    g[j] += gy[j] * (1.0 - y[j] * y[j]);
                }
            }),
            Op::Relu(x) => {
                let xs = self.data(*x);
                acc(*x, &mut |g| {
                    for j in 0..g.len() {
                        if xs[j] > 0.0 {
                            g[j] += gy[j];
                        }
                    }
                })
            }
            Op::Abs(x) => {
                let xs = self.data(*x);
                acc(*x, &mut |g| {
                    for j in 0..g.len() {
                        g[j] += gy[j] * sign(xs[j]);
                    }
                })
            }
            Op::AddRow { x, row } => {
                acc(*x, &mut |g| g.iter_mut().zip(gy).for_each(|(g, d)| *g += d));
                let c = self.value(*row).numel();
                acc(*row, &mut |g| {
                    for chunk in gy.chunks(c) {
                        g.iter_mut().zip(chunk).for_each(|(g, d)| *g += d);
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let c = node.value.cols();
                acc(*x, &mut |g| {
                    for ((gr, yr), dr) in g.chunks_mut(c).zip(y.chunks(c)).zip(gy.chunks(c)) {
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gr[j] += yr[j] * (dr[j] - dot);
                        }
                    }
                })
            }
            Op::Transpose(x) => {
                let (r, c) = (self.value(*x).rows(), self.value(*x).cols());
                acc(*x, &mut |g| {
                    for a in 0..r {
                        for b in 0..c {
                            g[a * c + b] += gy[b * r + a];
                        }
                    }
                })
            }
            Op::Reshape(x) => acc(*x, &mut |g| g.iter_mut().zip(gy).for_each(|(g, d)| *g += d)),
            Op::SliceRows { x, start } => {
                let c = node.value.cols();
                let off = start * c;
                acc(*x, &mut |g| {
                    g[off..off + gy.len()].iter_mut().zip(gy).for_each(|(g, d)| *g += d)
                })
            }
            Op::SliceCols { x, start } => {
                let w = node.value.cols();
                let c = self.value(*x).cols();
                acc(*x, &mut |g| {
                    for (grow, drow) in g.chunks_mut(c).zip(gy.chunks(w)) {
                        grow[*start..start + w].iter_mut().zip(drow).for_each(|(g, d)| *g += d);
                    }
                })
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    let seg = &gy[off..off + n];
                    acc(p, &mut |g| g.iter_mut().zip(seg).for_each(|(g, d)| *g += d));
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut col = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    acc(p, &mut |g| {
                        for (grow, drow) in g.chunks_mut(w).zip(gy.chunks(total)) {
                            grow.iter_mut().zip(&drow[col..col + w]).for_each(|(g, d)| *g += d);
                        }
                    });
                    col += w;
                }
            }
            Op::Sum(x) => acc(*x, &mut |g| g.iter_mut().for_each(|g| *g += gy[0])),
            Op::Mean(x) => {
                let n = self.value(*x).numel() as f64;
                acc(*x, &mut |g| g.iter_mut().for_each(|g| *g += gy[0] / n))
            }
            Op::MeanRows(x) => {
                let r = self.value(*x).rows() as f64;
                let c = gy.len();
                acc(*x, &mut |g| {
                    for chunk in g.chunks_mut(c) {
                        chunk.iter_mut().zip(gy).for_each(|(g, d)| *g += d / r);
                    }
                })
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let c = node.value.cols();
                let gv = self.data(*gain);
                acc(*gain, &mut |g| {
                    for (hr, dr) in xhat.chunks(c).zip(gy.chunks(c)) {
                        for j in 0..c {
                            g[j] += hr[j] * dr[j];
                        }
                    }
                });
                acc(*bias, &mut |g| {
                    for dr in gy.chunks(c) {
                        g.iter_mut().zip(dr).for_each(|(g, d)| *g += d);
                    }
                });
                acc(*x, &mut |g| {
                    for (i, ((gr, hr), dr)) in g.chunks_mut(c).zip(xhat.chunks(c)).zip(gy.chunks(c)).enumerate() {
                        let mut sum_d = 0.0;
                        let mut sum_dh = 0.0;
                        for j in 0..c {
                            let d = dr[j] * gv[j];
                            sum_d += d;
                            sum_dh += d * hr[j];
                        }
                        let k = inv_std[i] / c as f64;
                        for j in 0..c {
                            let d = dr[j] * gv[j];
                            gr[j] += k * (c as f64 * d - sum_d - hr[j] * sum_dh);
                        }
                    }
                });
            }
            Op::BatchNorm { x, gain, bias, xhat, inv_std, batch_stats } => {
                let c = node.value.cols();
                let r = node.value.rows();
                let gv = self.data(*gain);
                let mut sum_d = vec![0.0; c];
                let mut sum_dh = vec![0.0; c];
                for (hr, dr) in xhat.chunks(c).zip(gy.chunks(c)) {
                    for j in 0..c {
                        sum_d[j] += dr[j];
                        sum_dh[j] += dr[j] * hr[j];
                    }
                }
                acc(*gain, &mut |g| g.iter_mut().zip(&sum_dh).for_each(|(g, d)| *g += d));
                acc(*bias, &mut |g| g.iter_mut().zip(&sum_d).for_each(|(g, d)| *g += d));
                acc(*x, &mut |g| {
                    for (gr, (hr, dr)) in g.chunks_mut(c).zip(xhat.chunks(c).zip(gy.chunks(c))) {
                        for j in 0..c {
                            let s = gv[j] * inv_std[j];
                            if *batch_stats {
                                gr[j] += s / r as f64 * (r as f64 * dr[j] - sum_d[j] - hr[j] * sum_dh[j]);
                            } else {
                                gr[j] += s * dr[j];
                            }
                        }
                    }
                });
            }
            Op::BlockLeftMul { a, h, blocks } => {
                let k = self.value(*a).rows();
                let f = node.value.cols();
                let av = View::new(self.data(*a), k, k);
                let hd = self.data(*h);
                acc(*h, &mut |g| {
                    for p in 0..*blocks {
                        let span = p * k * f..(p + 1) * k * f;
                        gemm(av.t(), View::new(&gy[span.clone()], k, f), &mut g[span], false, true);
                    }
                });
                acc(*a, &mut |g| {
                    for p in 0..*blocks {
                        let span = p * k * f..(p + 1) * k * f;
                        gemm(View::new(&gy[span.clone()], k, f), View::new(&hd[span], k, f).t(), g, false, true);
                    }
                });
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let c = self.value(*logits).cols();
                let scale = gy[0] / labels.len() as f64;
                acc(*logits, &mut |g| {
                    for (i, (gr, pr)) in g.chunks_mut(c).zip(probs.chunks(c)).enumerate() {
                        for j in 0..c {
                            let t = if j == labels[i] { 1.0 } else { 0.0 };
                            gr[j] += scale * (pr[j] - t);
                        }
                    }
                })
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
