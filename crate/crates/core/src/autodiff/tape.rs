//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its value and the ids of its
//! inputs. Node ids increase in creation order, so walking the tape
//! backwards from the loss visits each node after all of its consumers.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use super::tensor::{gemm_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Clamp applied to predictions inside the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;
/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Fixed weighted neighborhood sums: `out[i] = sum_j w_ij * x[j]`.
#[derive(Debug, Clone)]
pub struct Propagation {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Propagation {
    pub fn new(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().flatten().any(|&(j, _)| j >= n) {
            return Err(Error::invalid("propagation column out of range"));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    RowGather(usize, Vec<usize>),
    NeighborSum(usize, Rc<Propagation>),
    Relu(usize),
    Sigmoid(usize),
    Recip(usize),
    Softmax(usize, Option<usize>),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    NormalizeRows(usize, Vec<f64>),
    Sum(usize),
    Mean(usize),
    Mse(usize, usize),
    Bce(usize, usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Tensor>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn param(&self, value: impl Into<Rc<Tensor>>) -> Var<'_> {
        self.push(value.into(), Op::Leaf, true)
    }

    /// An input that receives no gradient.
    pub fn constant(&self, value: impl Into<Rc<Tensor>>) -> Var<'_> {
        self.push(value.into(), Op::Leaf, false)
    }

    fn push(&self, value: Rc<Tensor>, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'_> {
        let rg = self.requires(inputs);
        self.push(Rc::new(value), op, rg)
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    /// Gradients from several consumers of a node are summed.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.shape() != [1] {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: root.value.shape().to_vec(),
                right: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !nodes[id].requires_grad {
                continue;
            }
            propagate(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        *self.grads.borrow_mut() = grads;
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, delta: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn shaped(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(like.shape().to_vec(), data).expect("gradient has input shape")
}

fn propagate(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    let wants = |i: usize| nodes[i].requires_grad;
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (av, bv) = (val(a), val(b));
            let (m, k) = (av.rows(), av.cols());
            let n = bv.cols();
            if wants(a) {
                let bt = bv.transpose();
                let mut ga = vec![0.0; m * k];
                gemm_acc(g.data(), bt.data(), &mut ga, m, n, k);
                accumulate(grads, nodes, a, shaped(av, ga));
            }
            if wants(b) {
                let mut gb = vec![0.0; k * n];
                gemm_tn_acc(av.data(), g.data(), &mut gb, m, k, n);
                accumulate(grads, nodes, b, shaped(bv, gb));
            }
        }
        &Op::Transpose(a) => accumulate(grads, nodes, a, g.transpose()),
        &Op::Add(a, b) => {
            accumulate(grads, nodes, a, g.clone());
            if wants(b) {
                let bv = val(b);
                if bv.len() == g.len() {
                    accumulate(grads, nodes, b, shaped(bv, g.data().to_vec()));
                } else {
                    let cols = g.cols();
                    let mut gb = vec![0.0; cols];
                    for r in 0..g.rows() {
                        for (acc, x) in gb.iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                    accumulate(grads, nodes, b, shaped(bv, gb));
                }
            }
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (val(a), val(b));
            if wants(a) {
                let ga = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                accumulate(grads, nodes, a, shaped(av, ga));
            }
            if wants(b) {
                let gb = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                accumulate(grads, nodes, b, shaped(bv, gb));
            }
        }
        &Op::Scale(a, c) => {
            let ga = g.data().iter().map(|x| x * c).collect();
            accumulate(grads, nodes, a, shaped(val(a), ga));
        }
        &Op::ScaleBy(a, s) => {
            let (av, sv) = (val(a), val(s).item());
            if wants(a) {
                let ga = g.data().iter().map(|x| x * sv).collect();
                accumulate(grads, nodes, a, shaped(av, ga));
            }
            if wants(s) {
                let gs: f64 = g.data().iter().zip(av.data()).map(|(x, y)| x * y).sum();
                accumulate(grads, nodes, s, Tensor::scalar(gs));
            }
        }
        Op::Concat(inputs) => {
            let rows = g.rows();
            let total = g.cols();
            let mut offset = 0;
            for &i in inputs {
                let iv = val(i);
                let c = iv.cols();
                if wants(i) {
                    let mut gi = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        gi.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                    }
                    accumulate(grads, nodes, i, shaped(iv, gi));
                }
                offset += c;
            }
        }
        &Op::SliceCols(a, start) => {
            let av = val(a);
            let (rows, cols, len) = (av.rows(), av.cols(), g.cols());
            let mut ga = vec![0.0; rows * cols];
            for r in 0..rows {
                ga[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
            }
            accumulate(grads, nodes, a, shaped(av, ga));
        }
        Op::RowGather(table, index) => {
            let tv = val(*table);
            let cols = tv.cols();
            let mut gt = vec![0.0; tv.len()];
            for (r, &src) in index.iter().enumerate() {
                for (acc, x) in gt[src * cols..(src + 1) * cols].iter_mut().zip(g.row(r)) {
                    *acc += x;
                }
            }
            accumulate(grads, nodes, *table, shaped(tv, gt));
        }
        Op::NeighborSum(x, prop) => {
            let xv = val(*x);
            let cols = xv.cols();
            let mut gx = vec![0.0; xv.len()];
            for (i, row) in prop.rows.iter().enumerate() {
                for &(j, w) in row {
                    for (acc, y) in gx[j * cols..(j + 1) * cols].iter_mut().zip(g.row(i)) {
                        *acc += w * y;
                    }
                }
            }
            accumulate(grads, nodes, *x, shaped(xv, gx));
        }
        &Op::Relu(a) => {
            let av = val(a);
            let ga = g
                .data()
                .iter()
                .zip(av.data())
                .map(|(x, &y)| if y > 0.0 { *x } else { 0.0 })
                .collect();
            accumulate(grads, nodes, a, shaped(av, ga));
        }
        &Op::Sigmoid(a) => {
            let ga = g
                .data()
                .iter()
                .zip(out.data())
                .map(|(x, y)| x * y * (1.0 - y))
                .collect();
            accumulate(grads, nodes, a, shaped(val(a), ga));
        }
        &Op::Recip(a) => {
            let ga = g
                .data()
                .iter()
                .zip(out.data())
                .map(|(x, y)| -x * y * y)
                .collect();
            accumulate(grads, nodes, a, shaped(val(a), ga));
        }
        &Op::Softmax(a, scale) => {
            let av = val(a);
            let cols = av.cols();
            let s = scale.map_or(1.0, |s| val(s).item());
            let mut dz = vec![0.0; av.len()];
            for r in 0..av.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                for c in 0..cols {
                    dz[r * cols + c] = y[c] * (gr[c] - dot);
                }
            }
            if let Some(s_id) = scale {
                if wants(s_id) {
                    let gs: f64 = dz.iter().zip(av.data()).map(|(d, x)| d * x).sum();
                    accumulate(grads, nodes, s_id, Tensor::scalar(gs));
                }
            }
            if wants(a) {
                let ga = dz.into_iter().map(|d| d * s).collect();
                accumulate(grads, nodes, a, shaped(av, ga));
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            normalized,
            inv_std,
        } => {
            let xv = val(*x);
            let (rows, cols) = (xv.rows(), xv.cols());
            let gv = val(*gain);
            if wants(*gain) {
                let mut gg = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        gg[c] += g.data()[r * cols + c] * normalized[r * cols + c];
                    }
                }
                accumulate(grads, nodes, *gain, shaped(gv, gg));
            }
            if wants(*bias) {
                let mut gb = vec![0.0; cols];
                for r in 0..rows {
                    for (acc, y) in gb.iter_mut().zip(g.row(r)) {
                        *acc += y;
                    }
                }
                accumulate(grads, nodes, *bias, shaped(val(*bias), gb));
            }
            if wants(*x) {
                let mut gx = vec![0.0; rows * cols];
                let n = cols as f64;
                for r in 0..rows {
                    let base = r * cols;
                    let dxhat: Vec<f64> = (0..cols)
                        .map(|c| g.data()[base + c] * gv.data()[c])
                        .collect();
                    let mean_d = dxhat.iter().sum::<f64>() / n;
                    let mean_dx = dxhat
                        .iter()
                        .zip(&normalized[base..base + cols])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / n;
                    for c in 0..cols {
                        gx[base + c] =
                            inv_std[r] * (dxhat[c] - mean_d - normalized[base + c] * mean_dx);
                    }
                }
                accumulate(grads, nodes, *x, shaped(xv, gx));
            }
        }
        Op::NormalizeRows(a, norms) => {
            let av = val(*a);
            let cols = av.cols();
            let mut ga = vec![0.0; av.len()];
            for (r, &norm) in norms.iter().enumerate() {
                if norm == 0.0 {
                    continue;
                }
                let y = out.row(r);
                let gr = g.row(r);
                let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                for c in 0..cols {
                    ga[r * cols + c] = (gr[c] - y[c] * dot) / norm;
                }
            }
            accumulate(grads, nodes, *a, shaped(av, ga));
        }
        &Op::Sum(a) => {
            let av = val(a);
            accumulate(grads, nodes, a, Tensor::filled(av.shape(), g.item()));
        }
        &Op::Mean(a) => {
            let av = val(a);
            accumulate(grads, nodes, a, Tensor::filled(av.shape(), g.item() / av.len() as f64));
        }
        &Op::Mse(p, t) => {
            let (pv, tv) = (val(p), val(t));
            let n = pv.len() as f64;
            let d: Vec<f64> = pv
                .data()
                .iter()
                .zip(tv.data())
                .map(|(a, b)| 2.0 * (a - b) / n * g.item())
                .collect();
            if wants(t) {
                accumulate(grads, nodes, t, shaped(tv, d.iter().map(|x| -x).collect()));
            }
            accumulate(grads, nodes, p, shaped(pv, d));
        }
        &Op::Bce(p, t) => {
            let (pv, tv) = (val(p), val(t));
            let n = pv.len() as f64;
            if wants(p) {
                let gp = pv
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(&x, &y)| {
                        if x <= BCE_EPS || x >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            g.item() * (-y / x + (1.0 - y) / (1.0 - x)) / n
                        }
                    })
                    .collect();
                accumulate(grads, nodes, p, shaped(pv, gp));
            }
            if wants(t) {
                let gt = pv
                    .data()
                    .iter()
                    .map(|&x| {
                        let x = x.clamp(BCE_EPS, 1.0 - BCE_EPS);
                        g.item() * ((1.0 - x).ln() - x.ln()) / n
                    })
                    .collect();
                accumulate(grads, nodes, t, shaped(tv, gt));
            }
        }
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    shaped(t, t.data().iter().map(|&x| f(x)).collect())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    /// Borrow of the value without bumping the reference count.
    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        let nodes: Ref<'_, Vec<Node>> = self.tape.nodes.borrow();
        f(&nodes[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.with_value(|t| t.shape().to_vec())
    }

    pub fn item(&self) -> f64 {
        self.with_value(Tensor::item)
    }

    /// Gradient from the last [`Tape::backward`] call, if this node received one.
    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grads.borrow().get(self.id).cloned().flatten()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, op: Op, value: Tensor) -> Var<'t> {
        self.tape.record(value, op, &[self.id])
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = a.matrix_dims("matmul")?;
        let (k2, n) = b.matrix_dims("matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", &a, &b));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(a.data(), b.data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.tape.record(t, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let a = self.value();
        a.matrix_dims("transpose")?;
        Ok(self.unary(Op::Transpose(self.id), a.transpose()))
    }

    /// Elementwise sum; `other` may also be a single row (`[cols]` or
    /// `[1, cols]`) broadcast over every row of `self`.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let data = if a.shape() == b.shape() {
            a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()
        } else if b.len() == a.cols() && b.rows() == 1 {
            let cols = a.cols();
            a.data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + b.data()[i % cols])
                .collect()
        } else {
            return Err(mismatch("add", &a, &b));
        };
        let t = shaped(&a, data);
        Ok(self.tape.record(t, Op::Add(self.id, other.id), &[self.id, other.id]))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(mismatch("mul", &a, &b));
        }
        let t = shaped(&a, a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect());
        Ok(self.tape.record(t, Op::Mul(self.id, other.id), &[self.id, other.id]))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let t = self.with_value(|a| map(a, |x| x * c));
        self.unary(Op::Scale(self.id, c), t)
    }

    /// Multiplies by a differentiable scalar.
    pub fn scale_by(self, s: Var<'t>) -> Result<Var<'t>> {
        let (a, sv) = (self.value(), s.value());
        if sv.shape() != [1] {
            return Err(mismatch("scale_by", &a, &sv));
        }
        let c = sv.item();
        let t = map(&a, |x| x * c);
        Ok(self.tape.record(t, Op::ScaleBy(self.id, s.id), &[self.id, s.id]))
    }

    pub fn relu(self) -> Var<'t> {
        let t = self.with_value(|a| map(a, |x| x.max(0.0)));
        self.unary(Op::Relu(self.id), t)
    }

    pub fn sigmoid(self) -> Var<'t> {
        let t = self.with_value(|a| map(a, sigmoid));
        self.unary(Op::Sigmoid(self.id), t)
    }

    pub fn recip(self) -> Var<'t> {
        let t = self.with_value(|a| map(a, |x| 1.0 / x));
        self.unary(Op::Recip(self.id), t)
    }

    /// Row-wise softmax of `self`, optionally of `scale * self`.
    pub fn softmax(self, scale: Option<Var<'t>>) -> Result<Var<'t>> {
        let a = self.value();
        let s = match scale {
            Some(s) => {
                let sv = s.value();
                if sv.shape() != [1] {
                    return Err(mismatch("softmax", &a, &sv));
                }
                sv.item()
            }
            None => 1.0,
        };
        let cols = a.cols();
        let mut out = vec![0.0; a.len()];
        for r in 0..a.rows() {
            let row = a.row(r);
            let max = row.iter().map(|x| x * s).fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * cols..(r + 1) * cols];
            let mut total = 0.0;
            for (d, x) in dst.iter_mut().zip(row) {
                *d = (x * s - max).exp();
                total += *d;
            }
            for d in dst.iter_mut() {
                *d /= total;
            }
        }
        let t = shaped(&a, out);
        let op = Op::Softmax(self.id, scale.map(|s| s.id));
        let inputs: Vec<usize> = std::iter::once(self.id).chain(scale.map(|s| s.id)).collect();
        Ok(self.tape.record(t, op, &inputs))
    }

    /// Row-wise layer normalization with learnable per-column gain and bias.
    pub fn layer_norm(self, gain: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, gv, bv) = (self.value(), gain.value(), bias.value());
        let cols = x.cols();
        if gv.len() != cols || bv.len() != cols {
            return Err(mismatch("layer_norm", &x, &gv));
        }
        let n = cols as f64;
        let mut normalized = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(x.rows());
        let mut out = vec![0.0; x.len()];
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for c in 0..cols {
                let xh = (row[c] - mean) * is;
                normalized[r * cols + c] = xh;
                out[r * cols + c] = xh * gv.data()[c] + bv.data()[c];
            }
        }
        let t = shaped(&x, out);
        let op = Op::LayerNorm {
            x: self.id,
            gain: gain.id,
            bias: bias.id,
            normalized,
            inv_std,
        };
        Ok(self.tape.record(t, op, &[self.id, gain.id, bias.id]))
    }

    /// Scales each row to unit Euclidean norm; all-zero rows stay zero.
    pub fn normalize_rows(self) -> Var<'t> {
        let a = self.value();
        let cols = a.cols();
        let mut norms = Vec::with_capacity(a.rows());
        let mut out = vec![0.0; a.len()];
        for r in 0..a.rows() {
            let norm = a.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            norms.push(norm);
            if norm > 0.0 {
                for c in 0..cols {
                    out[r * cols + c] = a.row(r)[c] / norm;
                }
            }
        }
        let t = shaped(&a, out);
        self.unary(Op::NormalizeRows(self.id, norms), t)
    }

    /// Concatenates along the last axis.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of nothing"))?;
        let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        let rows = values[0].rows();
        if let Some(bad) = values.iter().find(|v| v.rows() != rows || v.shape().len() != 2) {
            return Err(mismatch("concat", &values[0], bad));
        }
        let total: usize = values.iter().map(|v| v.cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                out.extend_from_slice(v.row(r));
            }
        }
        let t = Tensor::new(vec![rows, total], out)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.tape.record(t, Op::Concat(ids.clone()), &ids))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (rows, cols) = a.matrix_dims("slice_cols")?;
        if len == 0 || start + len > cols {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: a.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&a.row(r)[start..start + len]);
        }
        let t = Tensor::new(vec![rows, len], out)?;
        Ok(self.unary(Op::SliceCols(self.id, start), t))
    }

    /// Embedding lookup: row `r` of the result is row `index[r]` of `self`.
    pub fn row_gather(self, index: &[usize]) -> Result<Var<'t>> {
        let table = self.value();
        let (rows, cols) = table.matrix_dims("row_gather")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: rows,
            });
        }
        if index.is_empty() {
            return Err(Error::invalid("row_gather with no indices"));
        }
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index {
            out.extend_from_slice(table.row(i));
        }
        let t = Tensor::new(vec![index.len(), cols], out)?;
        Ok(self.unary(Op::RowGather(self.id, index.to_vec()), t))
    }

    pub fn neighbor_sum(self, prop: &Rc<Propagation>) -> Result<Var<'t>> {
        let x = self.value();
        let (rows, cols) = x.matrix_dims("neighbor_sum")?;
        if rows != prop.len() {
            return Err(Error::ShapeMismatch {
                op: "neighbor_sum",
                left: x.shape().to_vec(),
                right: vec![prop.len()],
            });
        }
        let mut out = vec![0.0; rows * cols];
        for (i, row) in prop.rows.iter().enumerate() {
            let dst = &mut out[i * cols..(i + 1) * cols];
            for &(j, w) in row {
                for (d, v) in dst.iter_mut().zip(x.row(j)) {
                    *d += w * v;
                }
            }
        }
        let t = shaped(&x, out);
        Ok(self.unary(Op::NeighborSum(self.id, Rc::clone(prop)), t))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.with_value(|a| a.data().iter().sum());
        self.unary(Op::Sum(self.id), Tensor::scalar(s))
    }

    pub fn mean(self) -> Var<'t> {
        let s = self.with_value(|a| a.data().iter().sum::<f64>() / a.len() as f64);
        self.unary(Op::Mean(self.id), Tensor::scalar(s))
    }

    /// Mean squared error against `target`.
    pub fn mse_loss(self, target: Var<'t>) -> Result<Var<'t>> {
        let (p, t) = (self.value(), target.value());
        if p.shape() != t.shape() {
            return Err(mismatch("mse_loss", &p, &t));
        }
        let l = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        Ok(self
            .tape
            .record(Tensor::scalar(l), Op::Mse(self.id, target.id), &[self.id, target.id]))
    }

    /// Mean binary cross-entropy of probabilities `self` against `target`,
    /// with predictions clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce_loss(self, target: Var<'t>) -> Result<Var<'t>> {
        let (p, t) = (self.value(), target.value());
        if p.shape() != t.shape() {
            return Err(mismatch("bce_loss", &p, &t));
        }
        let l = -p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&x, &y)| {
                let x = x.clamp(BCE_EPS, 1.0 - BCE_EPS);
                y * x.ln() + (1.0 - y) * (1.0 - x).ln()
            })
            .sum::<f64>()
            / p.len() as f64;
        Ok(self
            .tape
            .record(Tensor::scalar(l), Op::Bce(self.id, target.id), &[self.id, target.id]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn forward_examples() {
        let tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        assert_eq!(z.sigmoid().item(), 0.5);
        let row = tape.constant(t(&[vec![0.0, 0.0]]));
        assert_eq!(row.softmax(None).unwrap().value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn mse_of_equal_values_is_zero_with_zero_gradient() {
        let tape = Tape::new();
        let p = tape.param(t(&[vec![0.3, 0.7]]));
        let y = tape.constant(t(&[vec![0.3, 0.7]]));
        let l = p.mse_loss(y).unwrap();
        assert_eq!(l.item(), 0.0);
        tape.backward(l).unwrap();
        assert_eq!(p.grad().unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let tape = Tape::new();
        let a = tape.param(Tensor::zeros(&[2, 3]));
        let b = tape.param(Tensor::zeros(&[2, 3]));
        let err = a.matmul(b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(err.to_string().contains("[2, 3]"));
        assert!(a.add(tape.param(Tensor::zeros(&[4]))).is_err());
        assert!(a.mse_loss(tape.param(Tensor::zeros(&[3, 2]))).is_err());
    }

    #[test]
    fn diamond_accumulates_both_paths() {
        // y = x*x + 3x  ->  dy/dx = 2x + 3
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.5));
        let sq = x.mul(x).unwrap();
        let y = sq.add(x.scale(3.0)).unwrap().sum();
        tape.backward(y).unwrap();
        assert_eq!(x.grad().unwrap().item(), 2.0 * 1.5 + 3.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let p = tape.param(Tensor::scalar(3.0));
        let y = p.mul(c).unwrap().sum();
        tape.backward(y).unwrap();
        assert!(c.grad().is_none());
        assert_eq!(p.grad().unwrap().item(), 2.0);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_layer_norm_standardizes() {
        let tape = Tape::new();
        let x = tape.param(t(&[vec![1.0, -2.0, 30.0, 4.5], vec![-100.0, 0.0, 3.0, 3.0]]));
        let s = x.softmax(Some(tape.constant(Tensor::scalar(3.3)))).unwrap();
        for r in 0..2 {
            assert!((s.value().row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let g = tape.constant(Tensor::filled(&[4], 1.0));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = x.layer_norm(g, b).unwrap().value();
        for r in 0..2 {
            let row = y.row(r);
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            // the variance floor keeps this just under one
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn normalize_rows_keeps_zero_rows() {
        let tape = Tape::new();
        let x = tape.param(t(&[vec![3.0, 4.0], vec![0.0, 0.0]]));
        let y = x.normalize_rows();
        assert_eq!(y.value().data(), &[0.6, 0.8, 0.0, 0.0]);
        tape.backward(y.sum()).unwrap();
        assert_eq!(&x.grad().unwrap().data()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2]));
        assert!(tape.backward(x).is_err());
    }
}
