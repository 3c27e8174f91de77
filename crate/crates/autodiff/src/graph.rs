//! Tape-based reverse-mode differentiation.
//!
//! Every primitive evaluates eagerly and appends a node to the tape. Nodes
//! are created in topological order, so `backward` walks the tape once from
//! the loss towards the leaves.

use std::collections::HashMap;

use crate::error::{shape_err, Error, Result};
use crate::param::{Gradients, ParamId, ParamStore};
use crate::tensor::{gemm, require_matrix, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Tensor },
    BceWithLogits { logits: Var, targets: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The tape. One graph per forward pass; drop it after `backward`.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    largest_axis: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Longest single axis of any tensor recorded so far.
    pub fn largest_axis(&self) -> usize {
        self.largest_axis
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        if let Some(&d) = value.shape().iter().max() {
            self.largest_axis = self.largest_axis.max(d);
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Binds a parameter's current value. Repeated calls return the same var.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let value = store.get(id)?.value.clone();
        let v = self.push(value, Op::Param(id), true);
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = require_matrix("matmul", self.value(a))?;
        let (k2, n) = require_matrix("matmul", self.value(b))?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{k}, _] right operand"), self.shape(b)));
        }
        let mut out = Tensor::zeros(&[m, n]);
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, out.data_mut(), false);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), g))
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = require_matrix("matmul_nt", self.value(a))?;
        let (n, k2) = require_matrix("matmul_nt", self.value(b))?;
        if k != k2 {
            return Err(shape_err("matmul_nt", format!("[_, {k}] right operand"), self.shape(b)));
        }
        let mut out = Tensor::zeros(&[m, n]);
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), true, out.data_mut(), false);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::MatMulNt(a, b), g))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?}", self.shape(a)), self.shape(b)));
        }
        Ok(())
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, rec, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a bias row `b` (length = last axis of `a`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let cols = self.value(a).cols();
        if self.value(b).len() != cols || self.shape(a).is_empty() {
            return Err(shape_err("add_row", format!("bias of {cols} values"), self.shape(b)));
        }
        let mut out = self.value(a).clone();
        let bias = self.value(b).data();
        for row in out.data_mut().chunks_mut(cols) {
            for (x, &bb) in row.iter_mut().zip(bias) {
                *x += bb;
            }
        }
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::AddRow(a, b), g))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, rec: Op) -> Var {
        let out = self.value(a).map(f);
        let g = self.grad_of(&[a]);
        self.push(out, rec, g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Elementwise clamp; gradient passes only inside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Concatenation along the last axis. All parts must agree on rows.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err("concat", "at least one operand", &[]))?;
        let rows = self.value(first).rows();
        let lead = self.shape(first)[..self.shape(first).len().saturating_sub(1)].to_vec();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.shape().is_empty() || t.rows() != rows {
                return Err(shape_err("concat", format!("{rows} rows"), t.shape()));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(cols);
        let out = Tensor::new(shape, data)?;
        let g = self.grad_of(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), g))
    }

    /// Stacks 2-d operands (or 1-d vectors) along the first axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err("concat_rows", "at least one operand", &[]))?;
        let one_d = self.shape(first).len() == 1;
        let cols = if one_d { 1 } else { self.value(first).cols() };
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            let ok = if one_d { t.shape().len() == 1 } else { t.shape().len() == 2 && t.cols() == cols };
            if !ok {
                return Err(shape_err("concat_rows", format!("matching trailing shape of {:?}", self.shape(first)), t.shape()));
            }
            rows += if one_d { t.len() } else { t.rows() };
            data.extend_from_slice(t.data());
        }
        let shape = if one_d { vec![rows] } else { vec![rows, cols] };
        let out = Tensor::new(shape, data)?;
        let g = self.grad_of(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), g))
    }

    /// Columns `[start, start + len)` of a 2-d tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = require_matrix("slice_cols", self.value(a))?;
        if start + len > cols {
            return Err(Error::Index { op: "slice_cols", index: start + len, len: cols });
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start), g))
    }

    /// Rows `[start, start + len)` of a 2-d tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = require_matrix("slice_rows", self.value(a))?;
        if start + len > rows {
            return Err(Error::Index { op: "slice_rows", index: start + len, len: rows });
        }
        let data = self.value(a).data()[start * cols..(start + len) * cols].to_vec();
        let out = Tensor::new(vec![len, cols], data)?;
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::SliceRows(a, start), g))
    }

    /// Selects rows of a 2-d table by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = require_matrix("gather_rows", self.value(table))?;
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            if i >= rows {
                return Err(Error::Index { op: "gather_rows", index: i, len: rows });
            }
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        let g = self.grad_of(&[table]);
        Ok(self.push(out, Op::GatherRows(table, ids.to_vec()), g))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        let g = self.grad_of(&[a]);
        Ok(self.push(out, Op::Reshape(a), g))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let g = self.grad_of(&[a]);
        self.push(out, Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Per-row softmax cross-entropy against integer labels; output `[rows]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.shape().is_empty() || t.rows() != labels.len() {
            return Err(shape_err("softmax_cross_entropy", format!("{} rows of logits", labels.len()), t.shape()));
        }
        let cols = t.cols();
        let mut probs = Tensor::zeros(&[t.rows(), cols]);
        let mut losses = Vec::with_capacity(labels.len());
        for (r, &label) in labels.iter().enumerate() {
            if label >= cols {
                return Err(Error::Index { op: "softmax_cross_entropy", index: label, len: cols });
            }
            let row = t.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = &mut probs.data_mut()[r * cols..(r + 1) * cols];
            let mut z = 0.0;
            for (pi, &x) in p.iter_mut().zip(row) {
                *pi = (x - max).exp();
                z += *pi;
            }
            for pi in p.iter_mut() {
                *pi /= z;
            }
            losses.push(max + z.ln() - row[label]);
        }
        let out = Tensor::new(vec![labels.len()], losses)?;
        let g = self.grad_of(&[logits]);
        Ok(self.push(
            out,
            Op::SoftmaxCe { logits, labels: labels.to_vec(), probs },
            g,
        ))
    }

    /// Elementwise numerically stable `-[t log σ(x) + (1 - t) log(1 - σ(x))]`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let t = self.value(logits);
        if t.shape() != targets.shape() {
            return Err(shape_err("bce_with_logits", format!("{:?}", t.shape()), targets.shape()));
        }
        let data = t
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let g = self.grad_of(&[logits]);
        Ok(self.push(out, Op::BceWithLogits { logits, targets: targets.clone() }, g))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads, &mut out);
        }
        out.entries.sort_by_key(|(id, _)| *id);
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        let y = &node.value;
        match &node.op {
            Op::Constant => {}
            Op::Param(id) => out.entries.push((*id, g.clone())),
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[1];
                if self.nodes[a.0].needs_grad {
                    let da = slot(grads, *a, self.value(*a).shape());
                    gemm(m, n, k, g.data(), false, self.value(*b).data(), true, da.data_mut(), true);
                }
                if self.nodes[b.0].needs_grad {
                    let db = slot(grads, *b, self.value(*b).shape());
                    gemm(k, m, n, self.value(*a).data(), true, g.data(), false, db.data_mut(), true);
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[0];
                if self.nodes[a.0].needs_grad {
                    let da = slot(grads, *a, self.value(*a).shape());
                    gemm(m, n, k, g.data(), false, self.value(*b).data(), false, da.data_mut(), true);
                }
                if self.nodes[b.0].needs_grad {
                    let db = slot(grads, *b, self.value(*b).shape());
                    gemm(n, m, k, g.data(), true, self.value(*a).data(), false, db.data_mut(), true);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g, |_, g| g);
                self.acc(grads, *b, g, |_, g| g);
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g, |_, g| g);
                self.acc(grads, *b, g, |_, g| -g);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, g, |i, g| g * vb[i]);
                self.acc(grads, *b, g, |i, g| g * va[i]);
            }
            Op::AddRow(a, b) => {
                self.acc(grads, *a, g, |_, g| g);
                if self.nodes[b.0].needs_grad {
                    let cols = g.cols();
                    let db = slot(grads, *b, self.value(*b).shape());
                    for row in g.data().chunks(cols) {
                        for (d, &x) in db.data_mut().iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g, |_, g| g * s),
            Op::AddScalar(a) => self.acc(grads, *a, g, |_, g| g),
            Op::Tanh(a) => self.acc(grads, *a, g, |i, g| g * (1.0 - y.data()[i] * y.data()[i])),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, g, |i, g| if x[i] > 0.0 { g } else { 0.0 });
            }
            Op::Sigmoid(a) => self.acc(grads, *a, g, |i, g| {
                let s = y.data()[i];
                g * s * (1.0 - s)
            }),
            Op::Exp(a) => self.acc(grads, *a, g, |i, g| g * y.data()[i]),
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, g, |i, g| g / x[i]);
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, g, |i, g| 2.0 * x[i] * g);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, g, |i, g| if x[i] >= *lo && x[i] <= *hi { g } else { 0.0 });
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.nodes[p.0].needs_grad {
                        let dp = slot(grads, p, self.value(p).shape());
                        for r in 0..rows {
                            let src = &g.data()[r * total + offset..r * total + offset + w];
                            for (d, &x) in dp.data_mut()[r * w..(r + 1) * w].iter_mut().zip(src) {
                                *d += x;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.nodes[p.0].needs_grad {
                        let dp = slot(grads, p, self.value(p).shape());
                        for (d, &x) in dp.data_mut().iter_mut().zip(&g.data()[offset..offset + len]) {
                            *d += x;
                        }
                    }
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                if self.nodes[a.0].needs_grad {
                    let cols = self.value(*a).cols();
                    let w = g.cols();
                    let da = slot(grads, *a, self.value(*a).shape());
                    for (r, row) in g.data().chunks(w).enumerate() {
                        let dst = &mut da.data_mut()[r * cols + start..r * cols + start + w];
                        for (d, &x) in dst.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                if self.nodes[a.0].needs_grad {
                    let cols = self.value(*a).cols();
                    let da = slot(grads, *a, self.value(*a).shape());
                    let dst = &mut da.data_mut()[start * cols..start * cols + g.len()];
                    for (d, &x) in dst.iter_mut().zip(g.data()) {
                        *d += x;
                    }
                }
            }
            Op::GatherRows(table, ids) => {
                if self.nodes[table.0].needs_grad {
                    let cols = self.value(*table).cols();
                    let dt = slot(grads, *table, self.value(*table).shape());
                    for (r, &i) in ids.iter().enumerate() {
                        let src = &g.data()[r * cols..(r + 1) * cols];
                        for (d, &x) in dt.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Reshape(a) => self.acc(grads, *a, g, |_, g| g),
            Op::Sum(a) => {
                let s = g.item();
                self.acc(grads, *a, g, |_, _| s);
            }
            Op::SoftmaxCe { logits, labels, probs } => {
                if self.nodes[logits.0].needs_grad {
                    let cols = probs.cols();
                    let dl = slot(grads, *logits, self.value(*logits).shape());
                    for (r, &label) in labels.iter().enumerate() {
                        let gr = g.data()[r];
                        let p = &probs.data()[r * cols..(r + 1) * cols];
                        let d = &mut dl.data_mut()[r * cols..(r + 1) * cols];
                        for (dd, &pp) in d.iter_mut().zip(p) {
                            *dd += gr * pp;
                        }
                        d[label] -= gr;
                    }
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let x = self.value(*logits).data();
                let t = targets.data();
                self.acc(grads, *logits, g, |i, g| g * (sigmoid(x[i]) - t[i]));
            }
        }
    }

    /// `grads[a] += f(i, g[i])` elementwise, when `a` needs a gradient.
    fn acc(&self, grads: &mut [Option<Tensor>], a: Var, g: &Tensor, f: impl Fn(usize, f64) -> f64) {
        if !self.nodes[a.0].needs_grad {
            return;
        }
        let da = slot(grads, a, self.value(a).shape());
        if g.len() == da.len() {
            for (i, (d, &x)) in da.data_mut().iter_mut().zip(g.data()).enumerate() {
                *d += f(i, x);
            }
        } else {
            // only `Sum` broadcasts a scalar upstream gradient
            let x = g.item();
            for (i, d) in da.data_mut().iter_mut().enumerate() {
                *d += f(i, x);
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let y = g.tanh(x);
        assert_eq!(g.value(y), &Tensor::zeros(&[2, 3]));
    }

    #[test]
    fn uniform_softmax_ce_is_log_of_classes() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 4]));
        let l = g.softmax_cross_entropy(x, &[2]).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
        assert!((g.value(l).item() - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn square_derivative() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(3.0));
        let mut g = Graph::new();
        let x = g.param(&store, id).unwrap();
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(id).unwrap().item(), 6.0);
    }

    #[test]
    fn sum_of_matmul_gradient_is_row_sums_of_b() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let b = store.add("b", Tensor::new(vec![3, 2], vec![1., -1., 2., 0.5, 0., 3.]).unwrap());
        let mut g = Graph::new();
        let (va, vb) = (g.param(&store, a).unwrap(), g.param(&store, b).unwrap());
        let c = g.matmul(va, vb).unwrap();
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        // d/dA sum(AB) = 1 · Bᵀ: every row equals the row sums of B.
        assert_eq!(grads.get(a).unwrap().data(), &[0., 2.5, 3., 0., 2.5, 3.]);
        // d/dB = Aᵀ · 1: every column equals the column sums of A.
        assert_eq!(grads.get(b).unwrap().data(), &[5., 5., 7., 7., 9., 9.]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert!(matches!(err, Error::Shape { op: "matmul", .. }), "{err}");
        assert!(err.to_string().contains("expected"));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(a), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn gather_out_of_range() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        assert!(g.gather_rows(a, &[0, 2]).is_err());
    }

    #[test]
    fn constants_receive_no_gradient_entry() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(2.0));
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(5.0));
        let vw = g.param(&store, w).unwrap();
        let y = g.mul(c, vw).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.iter().count(), 1);
        assert_eq!(grads.get(w).unwrap().item(), 5.0);
    }

    #[test]
    fn largest_axis_tracks_shapes() {
        let mut g = Graph::new();
        g.constant(Tensor::zeros(&[3, 17]));
        g.constant(Tensor::zeros(&[5]));
        assert_eq!(g.largest_axis(), 17);
    }
}
