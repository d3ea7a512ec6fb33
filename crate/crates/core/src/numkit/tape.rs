//! Flat reverse-mode tape over a closed set of primitives.
//!
//! Nodes are appended in evaluation order, so every node's inputs precede it
//! and a single reverse sweep visits each node once.

use std::collections::BTreeMap;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifier of a trainable parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub u32);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    PowI(NodeId, i32),
    Sigmoid(NodeId),
    Relu(NodeId),
    Ln { x: NodeId, eps: f64 },
    SoftmaxRows(NodeId),
    CrossEntropy { probs: NodeId, labels: Vec<usize>, eps: f64 },
    SoftmaxCrossEntropy { logits: NodeId, labels: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
    MeanRows(NodeId),
    Norm2(NodeId),
    SliceRows { x: NodeId, start: usize },
    SliceCols { x: NodeId, start: usize },
    GradReversal { x: NodeId, lambda: f64 },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to every registered parameter.
///
/// A parameter registered more than once on the same tape receives the sum
/// of the gradients flowing into each registration.
#[derive(Clone, Debug, Default)]
pub struct GradMap {
    grads: BTreeMap<ParamId, Matrix>,
}

impl GradMap {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn insert(&mut self, id: ParamId, grad: Matrix) {
        self.grads.insert(id, grad);
    }
}

/// Per-node adjoints from a backward sweep.
#[derive(Clone, Debug)]
pub struct NodeGrads {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl NodeGrads {
    /// Gradient of the loss with respect to `node`; zeros if the loss does
    /// not depend on it.
    pub fn wrt(&self, node: NodeId) -> Matrix {
        match &self.grads[node.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[node.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Matrix {
        &self.nodes[node.0].value
    }

    pub fn scalar(&self, node: NodeId) -> Option<f64> {
        self.value(node).as_scalar()
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> NodeId {
        debug_assert!(value.all_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Records a value that takes no gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    /// Records a trainable parameter.
    pub fn param(&mut self, id: ParamId, value: Matrix) -> NodeId {
        self.push(Op::Param(id), value, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// Elementwise `a + b`; either side may broadcast along a unit dimension.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let (rows, cols) = broadcast_shape(va.shape(), vb.shape()).ok_or(Error::Dimension {
            op: name,
            left: va.shape(),
            right: vb.shape(),
        })?;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(bget(va, i, j), bget(vb, i, j)));
            }
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(op, Matrix::from_vec_unchecked(rows, cols, data), rg))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v * c);
        let rg = self.needs(&[x]);
        self.push(Op::Scale(x, c), value, rg)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v + c);
        let rg = self.needs(&[x]);
        self.push(Op::AddScalar(x), value, rg)
    }

    pub fn powi(&mut self, x: NodeId, k: i32) -> NodeId {
        let value = self.value(x).map(|v| v.powi(k));
        let rg = self.needs(&[x]);
        self.push(Op::PowI(x, k), value, rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).sigmoid();
        let rg = self.needs(&[x]);
        self.push(Op::Sigmoid(x), value, rg)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).relu();
        let rg = self.needs(&[x]);
        self.push(Op::Relu(x), value, rg)
    }

    /// `ln(max(x, eps))`.
    pub fn ln(&mut self, x: NodeId, eps: f64) -> NodeId {
        let value = self.value(x).map(|v| v.max(eps).ln());
        let rg = self.needs(&[x]);
        self.push(Op::Ln { x, eps }, value, rg)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).softmax_rows();
        let rg = self.needs(&[x]);
        self.push(Op::SoftmaxRows(x), value, rg)
    }

    /// Mean negative log-probability of the labelled class, with the
    /// probability clamped below at `eps`.
    pub fn cross_entropy(&mut self, probs: NodeId, labels: &[usize], eps: f64) -> Result<NodeId> {
        let value = cross_entropy_value(self.value(probs), labels, eps)?;
        let rg = self.needs(&[probs]);
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
                eps,
            },
            Matrix::scalar(value),
            rg,
        ))
    }

    /// Fused softmax and cross-entropy on raw logits, via log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let z = self.value(logits);
        check_labels(z, labels)?;
        let mut total = 0.0;
        for (row, &y) in z.iter_rows().zip(labels) {
            total += log_sum_exp(row) - row[y];
        }
        let value = total / labels.len() as f64;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            Matrix::scalar(value),
            rg,
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Op::Sum(x), Matrix::scalar(value), rg)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::contract("mean of an empty matrix"));
        }
        let value = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::Mean(x), Matrix::scalar(value), rg))
    }

    /// Column means as a `1 x cols` row.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.rows() == 0 {
            return Err(Error::contract("column mean over zero rows"));
        }
        let value = v.column_means();
        let rg = self.needs(&[x]);
        Ok(self.push(Op::MeanRows(x), value, rg))
    }

    /// Euclidean norm of all entries.
    pub fn norm2(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let rg = self.needs(&[x]);
        self.push(Op::Norm2(x), Matrix::scalar(value), rg)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let value = self.value(x).slice_rows(start, len)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::SliceRows { x, start }, value, rg))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if start + len > v.cols() {
            return Err(Error::Index {
                context: "slice_cols",
                index: start + len,
                limit: v.cols(),
            });
        }
        let mut data = Vec::with_capacity(v.rows() * len);
        for row in v.iter_rows() {
            data.extend_from_slice(&row[start..start + len]);
        }
        let value = Matrix::from_vec_unchecked(v.rows(), len, data);
        let rg = self.needs(&[x]);
        Ok(self.push(Op::SliceCols { x, start }, value, rg))
    }

    /// Identity in the forward pass; multiplies the flowing gradient by
    /// `-lambda` in the backward pass.
    pub fn grad_reversal(&mut self, x: NodeId, lambda: f64) -> Result<NodeId> {
        if !(lambda >= 0.0) {
            return Err(Error::contract(format!(
                "gradient reversal coefficient must be >= 0, got {lambda}"
            )));
        }
        let value = self.value(x).clone();
        let rg = self.needs(&[x]);
        Ok(self.push(Op::GradReversal { x, lambda }, value, rg))
    }

    /// Gradients of the scalar `loss` with respect to every parameter node.
    pub fn backward(&self, loss: NodeId) -> Result<GradMap> {
        let grads = self.backward_nodes(loss)?;
        let mut map = GradMap::default();
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let Op::Param(id) = node.op {
                let g = grads.wrt(NodeId(i));
                match map.grads.get_mut(&id) {
                    Some(acc) => {
                        if acc.shape() != g.shape() {
                            return Err(Error::contract(format!(
                                "parameter {id:?} registered with two shapes"
                            )));
                        }
                        acc.data_mut()
                            .iter_mut()
                            .zip(g.data())
                            .for_each(|(a, b)| *a += b);
                    }
                    None => {
                        map.grads.insert(id, g);
                    }
                }
            }
        }
        Ok(map)
    }

    /// Reverse sweep returning the adjoint of every node up to `loss`.
    pub fn backward_nodes(&self, loss: NodeId) -> Result<NodeGrads> {
        let loss_value = self.value(loss);
        if loss_value.as_scalar().is_none() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(NodeGrads {
            grads,
            shapes: self.nodes[..n].iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    let ga = g.matmul(&vb.transpose()).expect("matmul backward shape");
                    accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = va.transpose().matmul(g).expect("matmul backward shape");
                    accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.send_reduced(grads, *a, g.clone());
                self.send_reduced(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.send_reduced(grads, *a, g.clone());
                self.send_reduced(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (rows, cols) = g.shape();
                if self.nodes[a.0].requires_grad {
                    let ga = elementwise(rows, cols, |i, j| g.get(i, j) * bget(vb, i, j));
                    self.send_reduced(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = elementwise(rows, cols, |i, j| g.get(i, j) * bget(va, i, j));
                    self.send_reduced(grads, *b, gb);
                }
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.map(|v| v * c)),
            Op::AddScalar(x) => accumulate(grads, *x, g.clone()),
            Op::PowI(x, k) => {
                let vx = self.value(*x);
                let k = *k;
                let gx = zip_map(g, vx, |gv, xv| gv * k as f64 * xv.powi(k - 1));
                accumulate(grads, *x, gx);
            }
            Op::Sigmoid(x) => {
                let gx = zip_map(g, out, |gv, s| gv * s * (1.0 - s));
                accumulate(grads, *x, gx);
            }
            Op::Relu(x) => {
                let gx = zip_map(g, self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                accumulate(grads, *x, gx);
            }
            Op::Ln { x, eps } => {
                let eps = *eps;
                let gx = zip_map(g, self.value(*x), |gv, xv| if xv > eps { gv / xv } else { 0.0 });
                accumulate(grads, *x, gx);
            }
            Op::SoftmaxRows(x) => {
                // dx = s * (g - <g, s>) row by row
                let mut gx = out.clone();
                for r in 0..out.rows() {
                    let s = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, (sv, gv)) in gx.row_mut(r).iter_mut().zip(s.iter().zip(gr)) {
                        *o = sv * (gv - dot);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::CrossEntropy { probs, labels, eps } => {
                let p = self.value(*probs);
                let upstream = g.data()[0];
                let n = labels.len() as f64;
                let mut gp = Matrix::zeros(p.rows(), p.cols());
                for (r, &y) in labels.iter().enumerate() {
                    let pv = p.get(r, y);
                    if pv > *eps {
                        gp.set(r, y, -upstream / (n * pv));
                    }
                }
                accumulate(grads, *probs, gp);
            }
            Op::SoftmaxCrossEntropy { logits, labels } => {
                let mut gz = self.value(*logits).softmax_rows();
                let upstream = g.data()[0];
                let n = labels.len() as f64;
                for (r, &y) in labels.iter().enumerate() {
                    let row = gz.row_mut(r);
                    row[y] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= upstream / n);
                }
                accumulate(grads, *logits, gz);
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                accumulate(grads, *x, Matrix::filled(r, c, g.data()[0]));
            }
            Op::Mean(x) => {
                let v = self.value(*x);
                let (r, c) = v.shape();
                accumulate(grads, *x, Matrix::filled(r, c, g.data()[0] / v.len() as f64));
            }
            Op::MeanRows(x) => {
                let (r, c) = self.value(*x).shape();
                let inv = 1.0 / r as f64;
                let gx = elementwise(r, c, |_, j| g.get(0, j) * inv);
                accumulate(grads, *x, gx);
            }
            Op::Norm2(x) => {
                let norm = out.data()[0];
                let vx = self.value(*x);
                let gx = if norm > 0.0 {
                    let f = g.data()[0] / norm;
                    vx.map(|v| v * f)
                } else {
                    Matrix::zeros(vx.rows(), vx.cols())
                };
                accumulate(grads, *x, gx);
            }
            Op::SliceRows { x, start } => {
                let vx = self.value(*x);
                let mut gx = Matrix::zeros(vx.rows(), vx.cols());
                for r in 0..g.rows() {
                    gx.row_mut(start + r).copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, gx);
            }
            Op::SliceCols { x, start } => {
                let vx = self.value(*x);
                let mut gx = Matrix::zeros(vx.rows(), vx.cols());
                for r in 0..g.rows() {
                    gx.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, gx);
            }
            Op::GradReversal { x, lambda } => {
                let l = *lambda;
                accumulate(grads, *x, g.map(|v| -l * v));
            }
        }
    }

    /// Sums `g` down to the shape of `target` (undoing broadcasting).
    fn send_reduced(&self, grads: &mut [Option<Matrix>], target: NodeId, g: Matrix) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let (tr, tc) = self.value(target).shape();
        if g.shape() == (tr, tc) {
            accumulate(grads, target, g);
            return;
        }
        let mut reduced = Matrix::zeros(tr, tc);
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let (ri, rj) = (if tr == 1 { 0 } else { i }, if tc == 1 { 0 } else { j });
                let cur = reduced.get(ri, rj);
                reduced.set(ri, rj, cur + g.get(i, j));
            }
        }
        accumulate(grads, target, reduced);
    }
}

fn accumulate(grads: &mut [Option<Matrix>], node: NodeId, g: Matrix) {
    match &mut grads[node.0] {
        Some(acc) => acc
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

#[inline]
fn bget(m: &Matrix, i: usize, j: usize) -> f64 {
    let r = if m.rows() == 1 { 0 } else { i };
    let c = if m.cols() == 1 { 0 } else { j };
    m.get(r, c)
}

fn elementwise(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Matrix {
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(f(i, j));
        }
    }
    Matrix::from_vec_unchecked(rows, cols, data)
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec_unchecked(a.rows(), a.cols(), data)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_labels(m: &Matrix, labels: &[usize]) -> Result<()> {
    if m.rows() != labels.len() {
        return Err(Error::Dimension {
            op: "cross_entropy",
            left: m.shape(),
            right: (labels.len(), 1),
        });
    }
    if labels.is_empty() {
        return Err(Error::contract("cross entropy over zero rows"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= m.cols()) {
        return Err(Error::Index {
            context: "cross_entropy label",
            index: bad,
            limit: m.cols(),
        });
    }
    Ok(())
}

pub(crate) fn cross_entropy_value(probs: &Matrix, labels: &[usize], eps: f64) -> Result<f64> {
    check_labels(probs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -probs.get(r, y).max(eps).ln())
        .sum();
    Ok(total / labels.len() as f64)
}
