//! Reverse-mode differentiation over a recorded computation tape.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value and the indices of its inputs; [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints.

use std::sync::Arc;

use rand::Rng;

use super::param::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One weighted message `out[dst] += weight * x[src]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Message {
    pub dst: usize,
    pub src: usize,
    pub weight: f64,
}

/// A fixed set of messages between a source row space and a destination row space.
#[derive(Clone, Debug)]
pub struct MessageList {
    pub num_src: usize,
    pub num_dst: usize,
    pub messages: Vec<Message>,
}

impl MessageList {
    pub fn new(num_src: usize, num_dst: usize, messages: Vec<Message>) -> Result<Self> {
        if let Some(m) = messages.iter().find(|m| m.src >= num_src || m.dst >= num_dst) {
            return Err(Error::shape(format!(
                "message {} -> {} outside {num_src} x {num_dst}",
                m.src, m.dst
            )));
        }
        Ok(MessageList {
            num_src,
            num_dst,
            messages,
        })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    MulConst(Var, Arc<Tensor>),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    ConcatCols(Vec<Var>),
    Propagate(Var, Arc<MessageList>),
    EdgeScores(Var, Var, Arc<MessageList>),
    EdgeSoftmax(Var, Arc<MessageList>),
    WeightedPropagate(Var, Var, Arc<MessageList>),
    Softmax(Var, f64),
    SoftmaxCrossEntropy(Var, Arc<Vec<usize>>),
    Mean(Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Parameter handles for one forward pass, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct BoundParams(Vec<Var>);

impl BoundParams {
    /// Wraps externally created nodes, e.g. plain inputs in a gradient check.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        BoundParams(vars)
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.0[id]
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: Vec<(ParamId, Var)>,
}

fn finite(value: Tensor, op: &'static str) -> Result<Tensor> {
    if value.all_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(op))
    }
}

fn row_softmax(z: &[f64], temperature: f64, out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = ((v - max) / temperature).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Softmax of every row of `logits` at the given temperature.
pub(crate) fn softmax_rows(logits: &Tensor, temperature: f64) -> Tensor {
    let mut out = Tensor::zeros_like(logits);
    for r in 0..logits.rows() {
        row_softmax(logits.row(r), temperature, out.row_mut(r));
    }
    out
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn checked(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        let value = finite(value, name)?;
        Ok(self.push(value, op))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Records a constant input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Binds a parameter; binding the same id twice returns the same node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if let Some(&(_, var)) = self.bound.iter().find(|(p, _)| *p == id) {
            return var;
        }
        let var = self.push(params.get(id).value.clone(), Op::Param);
        self.bound.push((id, var));
        var
    }

    /// Binds every parameter of `params`, in id order.
    pub fn bind_all(&mut self, params: &ParamSet) -> BoundParams {
        BoundParams((0..params.len()).map(|id| self.param(params, id)).collect())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.checked(value, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.checked(value, Op::Add(a, b), "add")
    }

    /// Adds a `1 × cols` row (a bias) to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::shape(format!(
                "bias {:?} does not fit {:?}",
                rv.shape(),
                xv.shape()
            )));
        }
        let mut value = xv.clone();
        let bias = rv.data().to_vec();
        for r in 0..value.rows() {
            for (v, b) in value.row_mut(r).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        self.checked(value, Op::AddRow(x, row), "add_row")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.checked(value, Op::Relu(x), "relu")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.checked(value, Op::LeakyRelu(x, slope), "leaky_relu")
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, mask: Tensor) -> Result<Var> {
        let value = self.value(x).zip_map(&mask, |a, b| a * b)?;
        self.checked(value, Op::MulConst(x, Arc::new(mask)), "mul_const")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let value = self.value(x).map(|v| v * factor);
        self.checked(value, Op::Scale(x, factor), "scale")
    }

    /// Multiplies `x` by a learnable `1 × 1` scalar.
    pub fn scale_by(&mut self, x: Var, scalar: Var) -> Result<Var> {
        let s = self.value(scalar);
        if s.len() != 1 {
            return Err(Error::shape(format!("scale_by needs a scalar, got {:?}", s.shape())));
        }
        let s = s.data()[0];
        let value = self.value(x).map(|v| v * s);
        self.checked(value, Op::ScaleBy(x, scalar), "scale_by")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let rows = self.value(*first).rows();
        if let Some(bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(Error::shape(format!(
                "concat row mismatch: {rows} vs {}",
                self.value(*bad).rows()
            )));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// `out[dst] += weight * x[src]` for every message, with constant weights.
    pub fn propagate(&mut self, x: Var, messages: &Arc<MessageList>) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != messages.num_src {
            return Err(Error::shape(format!(
                "propagate over {} source rows, input has {}",
                messages.num_src,
                xv.rows()
            )));
        }
        let mut out = Tensor::zeros(messages.num_dst, xv.cols());
        for m in &messages.messages {
            let src = xv.row(m.src);
            for (o, v) in out.row_mut(m.dst).iter_mut().zip(src) {
                *o += m.weight * v;
            }
        }
        self.checked(out, Op::Propagate(x, Arc::clone(messages)), "propagate")
    }

    /// Per-message score `src_scores[src] + dst_scores[dst]`, as an `E × 1` column.
    pub fn edge_scores(&mut self, src_scores: Var, dst_scores: Var, messages: &Arc<MessageList>) -> Result<Var> {
        let (s, d) = (self.value(src_scores), self.value(dst_scores));
        if s.cols() != 1 || d.cols() != 1 || s.rows() != messages.num_src || d.rows() != messages.num_dst {
            return Err(Error::shape("edge_scores expects per-node score columns"));
        }
        let data = messages
            .messages
            .iter()
            .map(|m| s.data()[m.src] + d.data()[m.dst])
            .collect();
        let value = Tensor::matrix(messages.len(), 1, data)?;
        self.checked(
            value,
            Op::EdgeScores(src_scores, dst_scores, Arc::clone(messages)),
            "edge_scores",
        )
    }

    /// Softmax of message scores, normalized over all messages sharing a destination.
    pub fn edge_softmax(&mut self, scores: Var, messages: &Arc<MessageList>) -> Result<Var> {
        let sv = self.value(scores);
        if sv.len() != messages.len() {
            return Err(Error::shape("edge_softmax: one score per message"));
        }
        let mut max = vec![f64::NEG_INFINITY; messages.num_dst];
        for (m, &s) in messages.messages.iter().zip(sv.data()) {
            max[m.dst] = max[m.dst].max(s);
        }
        let mut exp: Vec<f64> = messages
            .messages
            .iter()
            .zip(sv.data())
            .map(|(m, &s)| (s - max[m.dst]).exp())
            .collect();
        let mut total = vec![0.0; messages.num_dst];
        for (m, &e) in messages.messages.iter().zip(&exp) {
            total[m.dst] += e;
        }
        for (m, e) in messages.messages.iter().zip(exp.iter_mut()) {
            *e /= total[m.dst];
        }
        let value = Tensor::matrix(messages.len(), 1, exp)?;
        self.checked(value, Op::EdgeSoftmax(scores, Arc::clone(messages)), "edge_softmax")
    }

    /// `out[dst] += weights[k] * x[src]` with per-message weights taken from a tape node.
    pub fn weighted_propagate(&mut self, x: Var, weights: Var, messages: &Arc<MessageList>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(weights));
        if xv.rows() != messages.num_src || wv.len() != messages.len() {
            return Err(Error::shape("weighted_propagate: mismatched rows or weights"));
        }
        let mut out = Tensor::zeros(messages.num_dst, xv.cols());
        for (m, &w) in messages.messages.iter().zip(wv.data()) {
            let src = xv.row(m.src);
            for (o, v) in out.row_mut(m.dst).iter_mut().zip(src) {
                *o += w * v;
            }
        }
        self.checked(
            out,
            Op::WeightedPropagate(x, weights, Arc::clone(messages)),
            "weighted_propagate",
        )
    }

    /// Row-wise softmax of `logits / temperature`.
    pub fn softmax(&mut self, logits: Var, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let value = softmax_rows(self.value(logits), temperature);
        self.checked(value, Op::Softmax(logits, temperature), "softmax")
    }

    /// Mean negative log-likelihood of `labels` under the row softmax of `logits`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} logit rows for {} labels",
                lv.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::invalid("cross-entropy over an empty batch"));
        }
        let classes = lv.cols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} outside {classes} classes")));
        }
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += log_total - (row[label] - max);
        }
        let value = Tensor::scalar(loss / labels.len() as f64);
        self.checked(
            value,
            Op::SoftmaxCrossEntropy(logits, Arc::new(labels.to_vec())),
            "softmax_cross_entropy",
        )
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        self.checked(value, Op::Mean(x), "mean")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.checked(value, Op::Sum(x), "sum")
    }

    /// Inverted dropout: zeroes entries with probability `rate` and rescales the rest.
    /// Identity outside training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.value(x), rate, rng);
        self.mul_const(x, mask)
    }

    /// Computes adjoints of every node with respect to the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else { continue };
            self.backprop_node(idx, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradient of every bound parameter into `params`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, params: &mut ParamSet) -> Result<()> {
        for &(id, var) in &self.bound {
            if let Some(g) = grads.get(var) {
                params.get_mut(id).grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut send = |var: Var, g: Tensor| -> Result<()> {
            match &mut grads[var.0] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        };
        let value = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[idx].op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                send(*a, up.matmul_t(value(*b))?)?;
                send(*b, value(*a).t_matmul(up)?)?;
            }
            Op::Add(a, b) => {
                send(*a, up.clone())?;
                send(*b, up.clone())?;
            }
            Op::AddRow(x, row) => {
                send(*x, up.clone())?;
                send(*row, up.sum_rows())?;
            }
            Op::Relu(x) => {
                send(*x, up.zip_map(value(*x), |g, v| if v > 0.0 { g } else { 0.0 })?)?;
            }
            Op::LeakyRelu(x, slope) => {
                let s = *slope;
                send(*x, up.zip_map(value(*x), |g, v| if v > 0.0 { g } else { s * g })?)?;
            }
            Op::MulConst(x, mask) => send(*x, up.zip_map(mask, |g, m| g * m)?)?,
            Op::Scale(x, f) => {
                let f = *f;
                send(*x, up.map(|g| g * f))?;
            }
            Op::ScaleBy(x, s) => {
                let sv = value(*s).data()[0];
                let ds: f64 = up.data().iter().zip(value(*x).data()).map(|(g, v)| g * v).sum();
                send(*x, up.map(|g| g * sv))?;
                send(*s, Tensor::scalar(ds))?;
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = value(p).cols();
                    let mut g = Tensor::zeros(up.rows(), cols);
                    for r in 0..up.rows() {
                        g.row_mut(r).copy_from_slice(&up.row(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    send(p, g)?;
                }
            }
            Op::Propagate(x, msgs) => {
                let mut g = Tensor::zeros_like(value(*x));
                for m in &msgs.messages {
                    let src = up.row(m.dst).to_vec();
                    for (o, v) in g.row_mut(m.src).iter_mut().zip(&src) {
                        *o += m.weight * v;
                    }
                }
                send(*x, g)?;
            }
            Op::EdgeScores(s, d, msgs) => {
                let mut gs = Tensor::zeros_like(value(*s));
                let mut gd = Tensor::zeros_like(value(*d));
                for (m, &g) in msgs.messages.iter().zip(up.data()) {
                    gs.data_mut()[m.src] += g;
                    gd.data_mut()[m.dst] += g;
                }
                send(*s, gs)?;
                send(*d, gd)?;
            }
            Op::EdgeSoftmax(scores, msgs) => {
                let alpha = &self.nodes[idx].value;
                let mut dot = vec![0.0; msgs.num_dst];
                for ((m, &a), &g) in msgs.messages.iter().zip(alpha.data()).zip(up.data()) {
                    dot[m.dst] += a * g;
                }
                let data = msgs
                    .messages
                    .iter()
                    .zip(alpha.data())
                    .zip(up.data())
                    .map(|((m, &a), &g)| a * (g - dot[m.dst]))
                    .collect();
                send(*scores, Tensor::matrix(msgs.len(), 1, data)?)?;
            }
            Op::WeightedPropagate(x, w, msgs) => {
                let xv = value(*x);
                let wv = value(*w);
                let mut gx = Tensor::zeros_like(xv);
                let mut gw = vec![0.0; msgs.len()];
                for (k, m) in msgs.messages.iter().enumerate() {
                    let g_dst = up.row(m.dst);
                    let weight = wv.data()[k];
                    gw[k] = g_dst.iter().zip(xv.row(m.src)).map(|(g, v)| g * v).sum();
                    let g_dst = g_dst.to_vec();
                    for (o, g) in gx.row_mut(m.src).iter_mut().zip(&g_dst) {
                        *o += weight * g;
                    }
                }
                send(*x, gx)?;
                send(*w, Tensor::new(wv.shape().to_vec(), gw)?)?;
            }
            Op::Softmax(x, t) => {
                let y = &self.nodes[idx].value;
                let mut g = Tensor::zeros_like(y);
                for r in 0..y.rows() {
                    let (yr, ur) = (y.row(r), up.row(r));
                    let dot: f64 = yr.iter().zip(ur).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &uv) in g.row_mut(r).iter_mut().zip(yr).zip(ur) {
                        *o = yv * (uv - dot) / t;
                    }
                }
                send(*x, g)?;
            }
            Op::SoftmaxCrossEntropy(logits, labels) => {
                let scale = up.data()[0] / labels.len() as f64;
                let mut g = softmax_rows(value(*logits), 1.0);
                for (r, &label) in labels.iter().enumerate() {
                    let row = g.row_mut(r);
                    row[label] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                send(*logits, g)?;
            }
            Op::Mean(x) => {
                let xv = value(*x);
                let g = up.data()[0] / xv.len() as f64;
                send(*x, Tensor::new(xv.shape().to_vec(), vec![g; xv.len()])?)?;
            }
            Op::Sum(x) => {
                let xv = value(*x);
                send(*x, Tensor::new(xv.shape().to_vec(), vec![up.data()[0]; xv.len()])?)?;
            }
        }
        Ok(())
    }
}

fn dropout_mask<R: Rng + ?Sized>(like: &Tensor, rate: f64, rng: &mut R) -> Tensor {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..like.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::new(like.shape().to_vec(), data).expect("mask shape matches input")
}
