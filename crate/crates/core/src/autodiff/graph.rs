//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the tape is a topological
//! order by construction and [`Graph::backward`] is a single reverse sweep.

use std::borrow::Cow;

use rand::Rng;

use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    StackRows(Vec<Var>),
    Transpose(Var),
    Softmax { input: Var, scale: f64 },
    MaxOverTime { input: Var, argmax: Vec<usize> },
    Dropout { input: Var, keep: Vec<f64> },
    CrossEntropy { logits: Var, label: usize, probs: Vec<f64> },
    Sum(Var),
    GatherRows { table: Var, ids: Vec<usize>, skip: Option<usize> },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// A single computation graph. One graph belongs to one execution context;
/// independent graphs can be built concurrently.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf borrowing an existing tensor.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable leaf borrowing an existing tensor.
    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward root with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].grad.take()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a length-`m` vector to every row of an (n×m) input.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xt, bt) = (self.value(x), self.value(bias));
        let (_, m) = xt.dims2();
        if bt.len() != m {
            return Err(Error::dim("add_row", xt.shape(), bt.shape()));
        }
        let b = bt.data();
        let data = xt
            .data()
            .chunks(m.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(v, bv)| v + bv))
            .collect();
        let out = Tensor::new(xt.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale_in_place(factor);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, factor), rg)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
            .expect("shape preserved")
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.map(x, sigmoid);
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.map(x, f64::tanh);
        let rg = self.rg(x);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| v.max(0.0));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    /// Horizontal concatenation of inputs sharing a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Usage("concat_cols of nothing".into()))?;
        let rows = self.value(first).rows();
        let all_vectors = parts.iter().all(|&p| self.shape(p).len() == 1);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            if r != rows {
                return Err(Error::dim("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let shape = if all_vectors { vec![total] } else { vec![rows, total] };
        let out = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        if start >= end || end > c {
            return Err(Error::dim("slice_cols", t.shape(), &[start, end]));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let shape = if t.shape().len() == 2 { vec![r, w] } else { vec![w] };
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols(x, start), rg))
    }

    /// Rows `start..end` of a matrix, kept as a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        if start >= end || end > r {
            return Err(Error::dim("slice_rows", t.shape(), &[start, end]));
        }
        let out = Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceRows(x, start), rg))
    }

    /// Stacks equal-width rows (vectors or 1×m matrices) into an n×m matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows
            .first()
            .ok_or_else(|| Error::Usage("stack_rows of nothing".into()))?;
        let m = self.value(first).len();
        let mut data = Vec::with_capacity(rows.len() * m);
        for &r in rows {
            let t = self.value(r);
            if t.len() != m || t.rows() != 1 {
                return Err(Error::dim("stack_rows", self.shape(first), t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows.len(), m, data)?;
        let rg = rows.iter().any(|&r| self.rg(r));
        Ok(self.push(out, Op::StackRows(rows.to_vec()), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        let rg = self.rg(x);
        self.push(out, Op::Transpose(x), rg)
    }

    /// Row-wise softmax of `e / sqrt(k)` over the columns where `mask` is true.
    /// Masked columns come out exactly zero.
    pub fn scaled_softmax_rows(&mut self, e: Var, k: usize, mask: &[bool]) -> Result<Var> {
        if k == 0 {
            return Err(Error::Config("softmax scaling dimension must be positive".into()));
        }
        let out = scaled_softmax_rows(self.value(e), k, mask)?;
        let rg = self.rg(e);
        let scale = 1.0 / (k as f64).sqrt();
        Ok(self.push(out, Op::Softmax { input: e, scale }, rg))
    }

    /// Per-column maximum over the unmasked rows; ties go to the lowest row.
    pub fn max_over_time(&mut self, v: Var, mask: &[bool]) -> Result<Var> {
        let (out, argmax) = max_over_time(self.value(v), mask)?;
        let rg = self.rg(v);
        Ok(self.push(out, Op::MaxOverTime { input: v, argmax }, rg))
    }

    /// Inverted dropout; identity when not training or when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
        check_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = dropout_keep(self.value(x).len(), rate, rng);
        let t = self.value(x);
        let data = t.data().iter().zip(&keep).map(|(v, k)| v * k).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout { input: x, keep }, rg))
    }

    /// `-log softmax(logits)[label]`, as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != 1 {
            return Err(Error::dim("cross_entropy", t.shape(), &[t.len()]));
        }
        if label >= t.len() {
            return Err(Error::Data(format!(
                "label {label} out of range for {} classes",
                t.len()
            )));
        }
        let probs = softmax(t.data());
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + t.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - t.data()[label];
        let rg = self.rg(logits);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, label, probs }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Rows of `table` selected by `ids`. Gradient never flows into the row
    /// index given as `frozen_row` (the padding row).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize], frozen_row: Option<usize>) -> Result<Var> {
        let t = self.value(table);
        let (r, c) = t.dims2();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(Error::Data(format!("token id {id} outside table of {r} rows")));
            }
            data.extend_from_slice(t.row(id));
        }
        if ids.is_empty() {
            return Err(Error::Usage("gather_rows with no ids".into()));
        }
        let out = Tensor::matrix(ids.len(), c, data)?;
        let rg = self.rg(table);
        Ok(self.push(
            out,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
                skip: frozen_row,
            },
            rg,
        ))
    }

    /// Populates gradients of every node reachable from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Usage(format!(
                "backward from non-scalar root of shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let shape = self.shape(loss).to_vec();
        self.nodes[loss.0].grad = Some(Tensor::filled(&shape, 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(grad) = self.nodes[idx].grad.take() else {
                continue;
            };
            self.propagate(idx, &grad)?;
            self.nodes[idx].grad = Some(grad);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            slot @ None => {
                let shape = node.value.shape().to_vec();
                *slot = Some(delta.reshaped(&shape).expect("gradient shape matches value"));
            }
        }
    }

    fn accumulate_with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let shape = node.value.shape().to_vec();
        let g = node.grad.get_or_insert_with(|| Tensor::zeros(&shape));
        f(g.data_mut());
    }

    fn like(&self, v: Var, data: Vec<f64>) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), data).expect("shape preserved")
    }

    fn propagate(&mut self, idx: usize, grad: &Tensor) -> Result<()> {
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        let result = self.propagate_op(idx, &op, grad);
        self.nodes[idx].op = op;
        result
    }

    fn propagate_op(&mut self, idx: usize, op: &Op, grad: &Tensor) -> Result<()> {
        let g = grad.data();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.value(*a).dims2();
                let m = self.value(*b).cols();
                if self.rg(*a) {
                    let mut da = vec![0.0; n * k];
                    matmul_nt_into(g, self.value(*b).data(), &mut da, n, m, k);
                    let da = self.like(*a, da);
                    self.accumulate(*a, da);
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * m];
                    matmul_tn_into(self.value(*a).data(), g, &mut db, n, k, m);
                    let db = self.like(*b, db);
                    self.accumulate(*b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, grad.clone());
                self.accumulate(*b, grad.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, grad.clone());
                let mut neg = grad.clone();
                neg.scale_in_place(-1.0);
                self.accumulate(*b, neg);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let d = g.iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect();
                    let d = self.like(*a, d);
                    self.accumulate(*a, d);
                }
                if self.rg(*b) {
                    let d = g.iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect();
                    let d = self.like(*b, d);
                    self.accumulate(*b, d);
                }
            }
            Op::AddRow(x, bias) => {
                self.accumulate(*x, grad.clone());
                let m = self.value(*bias).len();
                self.accumulate_with(*bias, |db| {
                    for row in g.chunks(m.max(1)) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                });
            }
            Op::Scale(x, f) => {
                let mut d = grad.clone();
                d.scale_in_place(*f);
                self.accumulate(*x, d);
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[idx].value.data();
                let d = g.iter().zip(y).map(|(gv, s)| gv * s * (1.0 - s)).collect();
                let d = self.like(*x, d);
                self.accumulate(*x, d);
            }
            Op::Tanh(x) => {
                let y = self.nodes[idx].value.data();
                let d = g.iter().zip(y).map(|(gv, t)| gv * (1.0 - t * t)).collect();
                let d = self.like(*x, d);
                self.accumulate(*x, d);
            }
            Op::Relu(x) => {
                let inp = self.value(*x).data();
                let d = g
                    .iter()
                    .zip(inp)
                    .map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 })
                    .collect();
                let d = self.like(*x, d);
                self.accumulate(*x, d);
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = grad.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            d.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        let d = self.like(p, d);
                        self.accumulate(p, d);
                    }
                    offset += w;
                }
            }
            Op::SliceCols(x, start) => {
                let (rows, w) = grad.dims2();
                let c = self.value(*x).cols();
                let start = *start;
                self.accumulate_with(*x, |dx| {
                    for i in 0..rows {
                        for j in 0..w {
                            dx[i * c + start + j] += g[i * w + j];
                        }
                    }
                });
            }
            Op::SliceRows(x, start) => {
                let c = self.value(*x).cols();
                let offset = start * c;
                self.accumulate_with(*x, |dx| {
                    for (d, v) in dx[offset..offset + g.len()].iter_mut().zip(g) {
                        *d += v;
                    }
                });
            }
            Op::StackRows(rows) => {
                let m = grad.cols();
                for (i, &r) in rows.iter().enumerate() {
                    if self.rg(r) {
                        let d = self.like(r, g[i * m..(i + 1) * m].to_vec());
                        self.accumulate(r, d);
                    }
                }
            }
            Op::Transpose(x) => {
                let d = grad.transpose();
                let d = d.reshaped(self.shape(*x))?;
                self.accumulate(*x, d);
            }
            Op::Softmax { input, scale } => {
                let y = &self.nodes[idx].value;
                let (r, c) = y.dims2();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    let yr = y.row(i);
                    let gr = &g[i * c..(i + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        d[i * c + j] = yr[j] * (gr[j] - dot) * scale;
                    }
                }
                let d = self.like(*input, d);
                self.accumulate(*input, d);
            }
            Op::MaxOverTime { input, argmax } => {
                let c = self.value(*input).cols();
                self.accumulate_with(*input, |dx| {
                    for (j, &row) in argmax.iter().enumerate() {
                        dx[row * c + j] += g[j];
                    }
                });
            }
            Op::Dropout { input, keep } => {
                let d = g.iter().zip(keep).map(|(a, b)| a * b).collect();
                let d = self.like(*input, d);
                self.accumulate(*input, d);
            }
            Op::CrossEntropy { logits, label, probs } => {
                let up = g[0];
                let mut d: Vec<f64> = probs.iter().map(|p| p * up).collect();
                d[*label] -= up;
                let d = self.like(*logits, d);
                self.accumulate(*logits, d);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                let d = self.like(*x, vec![g[0]; n]);
                self.accumulate(*x, d);
            }
            Op::GatherRows { table, ids, skip } => {
                let c = self.value(*table).cols();
                self.accumulate_with(*table, |dt| {
                    for (i, &id) in ids.iter().enumerate() {
                        if Some(id) == *skip {
                            continue;
                        }
                        for j in 0..c {
                            dt[id * c + j] += g[i * c + j];
                        }
                    }
                });
            }
        }
        Ok(())
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

/// Numerically stable softmax of a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / z).collect()
}

/// Value-level masked, scaled row softmax.
pub fn scaled_softmax_rows(e: &Tensor, k: usize, mask: &[bool]) -> Result<Tensor> {
    let (r, c) = e.dims2();
    if mask.len() != c {
        return Err(Error::dim("scaled_softmax_rows", e.shape(), &[mask.len()]));
    }
    if k == 0 {
        return Err(Error::Config("softmax scaling dimension must be positive".into()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::DegenerateMask {
            op: "scaled_softmax_rows",
        });
    }
    let scale = 1.0 / (k as f64).sqrt();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = e.row(i);
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v * scale)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..c {
            if mask[j] {
                let v = (row[j] * scale - max).exp();
                out[i * c + j] = v;
                z += v;
            }
        }
        for v in &mut out[i * c..(i + 1) * c] {
            *v /= z;
        }
    }
    Tensor::new(e.shape().to_vec(), out)
}

/// Value-level masked max pooling over rows; returns the pooled vector and
/// the winning row per column.
pub fn max_over_time(v: &Tensor, mask: &[bool]) -> Result<(Tensor, Vec<usize>)> {
    let (n, d) = v.dims2();
    if mask.len() != n {
        return Err(Error::dim("max_over_time", v.shape(), &[mask.len()]));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::DegenerateMask {
            op: "max_over_time",
        });
    }
    let mut best = vec![f64::NEG_INFINITY; d];
    let mut argmax = vec![usize::MAX; d];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (j, &x) in v.row(i).iter().enumerate() {
            if argmax[j] == usize::MAX || x > best[j] {
                best[j] = x;
                argmax[j] = i;
            }
        }
    }
    Ok((Tensor::vector(best), argmax))
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

fn dropout_keep(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let survivor = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { survivor })
        .collect()
}

/// Value-level inverted dropout driven by a seed.
pub fn dropout_apply(v: &Tensor, rate: f64, training: bool, seed: u64) -> Result<Tensor> {
    use rand::SeedableRng;
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(v.clone());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let keep = dropout_keep(v.len(), rate, &mut rng);
    let data = v.data().iter().zip(&keep).map(|(a, k)| a * k).collect();
    Tensor::new(v.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        let e = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let s = scaled_softmax_rows(&e, 1, &[true, true]).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        let e = Tensor::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let s = scaled_softmax_rows(&e, 4, &[true, true, false]).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.0]);

        let e = Tensor::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let s = scaled_softmax_rows(&e, 4, &[true, true]).unwrap();
        let sigma = 1f64.exp() / (1f64.exp() + 1.0);
        assert!(close(s.data()[0], sigma, 1e-15));
        assert!(close(s.data()[1], 1.0 - sigma, 1e-15));
        assert!(close(sigma, 0.7311, 1e-4));
    }

    #[test]
    fn softmax_all_masked_is_degenerate() {
        let e = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            scaled_softmax_rows(&e, 1, &[false, false]),
            Err(Error::DegenerateMask { .. })
        ));
    }

    #[test]
    fn max_over_time_examples() {
        let v = Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(max_over_time(&v, &[true, true]).unwrap().0.data(), &[3.0, 5.0]);
        let v = Tensor::from_rows(&[vec![1.0, 5.0], vec![9.0, 9.0]]).unwrap();
        assert_eq!(max_over_time(&v, &[true, false]).unwrap().0.data(), &[1.0, 5.0]);
        let v = Tensor::from_rows(&[vec![4.0, -2.0]]).unwrap();
        assert_eq!(max_over_time(&v, &[true]).unwrap().0.data(), &[4.0, -2.0]);
        assert!(max_over_time(&v, &[false]).is_err());
    }

    #[test]
    fn max_over_time_ties_go_to_lowest_row() {
        let v = Tensor::from_rows(&[vec![7.0], vec![7.0]]).unwrap();
        assert_eq!(max_over_time(&v, &[true, true]).unwrap().1, vec![0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let l = g.constant(Tensor::vector(vec![0.0; 4]));
        let ce = g.cross_entropy(l, 2).unwrap();
        assert!(close(g.value(ce).item(), 4f64.ln(), 1e-12));

        let l = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let ce = g.cross_entropy(l, 0).unwrap();
        assert!(g.value(ce).item().abs() < 1e-12);

        let l = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let ce = g.cross_entropy(l, 0).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 2f64.exp())).ln();
        assert!(close(g.value(ce).item(), expected, 1e-12));
        assert!(close(expected, 1.3133, 1e-4));

        assert!(matches!(g.cross_entropy(l, 2), Err(Error::Data(_))));
    }

    #[test]
    fn cross_entropy_gradient_is_probs_minus_onehot() {
        let mut g = Graph::new();
        let l = g.leaf(Tensor::vector(vec![1.0, 2.0, 0.5]), true);
        let ce = g.cross_entropy(l, 1).unwrap();
        g.backward(ce).unwrap();
        let p = softmax(&[1.0, 2.0, 0.5]);
        let grad = g.grad(l).unwrap().data();
        assert!(close(grad[0], p[0], 1e-15));
        assert!(close(grad[1], p[1] - 1.0, 1e-15));
        assert!(close(grad[2], p[2], 1e-15));
    }

    #[test]
    fn backward_linear_and_quadratic() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::zeros(&[2, 3]), true);
        let s = g.sum(w);
        g.backward(s).unwrap();
        assert!(g.grad(w).unwrap().data().iter().all(|&v| v == 1.0));

        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let sq = g.mul(w, w).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        assert!(matches!(g.backward(w), Err(Error::Usage(_))));
    }

    #[test]
    fn max_over_time_routes_one_row_per_dimension() {
        let mut g = Graph::new();
        let v = g.leaf(
            Tensor::from_rows(&[vec![1.0, 5.0, 2.0], vec![3.0, 2.0, 2.0], vec![0.0, 9.0, 1.0]]).unwrap(),
            true,
        );
        let p = g.max_over_time(v, &[true, true, false]).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        let grad = g.grad(v).unwrap();
        for j in 0..3 {
            let col: f64 = (0..3).map(|i| grad.get(i, j)).sum();
            assert_eq!(col, 1.0);
        }
        assert_eq!(grad.row(2), &[0.0, 0.0, 0.0]);
        assert_eq!(grad.get(0, 2), 1.0);
    }

    #[test]
    fn dropout_modes() {
        let v = Tensor::vector((0..10).map(f64::from).collect());
        assert_eq!(dropout_apply(&v, 0.5, false, 3).unwrap(), v);
        assert_eq!(dropout_apply(&v, 0.0, true, 3).unwrap(), v);
        assert!(matches!(dropout_apply(&v, 1.0, true, 3), Err(Error::Config(_))));
        assert!(dropout_apply(&v, -0.1, true, 3).is_err());
    }

    #[test]
    fn dropout_survivor_fraction() {
        let v = Tensor::filled(&[10_000], 1.0);
        let out = dropout_apply(&v, 0.5, true, 42).unwrap();
        let survivors = out.data().iter().filter(|&&x| x != 0.0).count() as f64 / 1e4;
        assert!((survivors - 0.5).abs() <= 0.05, "{survivors}");
        assert!(out.data().iter().all(|&x| x == 0.0 || x == 2.0));
    }

    #[test]
    fn graph_dropout_is_seeded() {
        let t = Tensor::filled(&[50], 1.0);
        let run = || {
            let mut g = Graph::new();
            let x = g.constant_ref(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let y = g.dropout(x, 0.3, true, &mut rng).unwrap();
            g.value(y).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn repeated_paths_accumulate() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![3.0]), true);
        let a = g.add(w, w).unwrap();
        let b = g.add(a, w).unwrap();
        let s = g.sum(b);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[3.0]);
    }
}
