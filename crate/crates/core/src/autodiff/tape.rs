//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends one node holding its forward value. Nodes are
//! only ever appended, so the tape is always in topological order and
//! `backward` is a single reverse sweep. Gradients accumulate into the
//! tape: calling `backward` twice without `zero_grad` doubles them.

use rand::Rng;

use super::tensor::{dot, dropout_mask, sigmoid, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    MeanAxis0(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Slice(Var, usize),
    Dot(Var, Var),
    Dropout(Var, Vec<f64>),
    CrossEntropy(Var, usize),
    BinaryCrossEntropy(Var, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The computation record: every primitive applied during a forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let mut value = t.clone();
        value.grad = None;
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    /// Accumulated gradient of a node, zeros if nothing reached it.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; self.value(v).len()])
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise product. If `b` holds a single element it multiplies
    /// every element of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let rg = self.rg(a) || self.rg(b);
        let (va, vb) = (self.value(a), self.value(b));
        if vb.len() == 1 && va.shape() != vb.shape() {
            let value = va.scale(vb.data()[0]);
            return Ok(self.push(value, Op::MulScalar(a, b), rg));
        }
        let value = va.mul(vb)?;
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).scale(k);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).tanh();
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).sigmoid();
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).softmax()?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Softmax(a), rg))
    }

    pub fn mean_axis0(&mut self, a: Var) -> Var {
        let value = self.value(a).mean_axis0();
        let rg = self.rg(a);
        self.push(value, Op::MeanAxis0(a), rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat(&refs)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::stack_rows(&refs)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::StackRows(parts.to_vec()), rg))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(a).slice(start, len)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Slice(a, start), rg))
    }

    /// Inner product of two equally sized tensors, as a one-element tensor.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).dot(self.value(b))?);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Dot(a, b), rg))
    }

    /// Inverted dropout; the identity (no new node) in eval mode or at rate 0.
    pub fn dropout(&mut self, a: Var, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
        let Some(mask) = dropout_mask(self.value(a).len(), rate, training, rng)? else {
            return Ok(a);
        };
        let va = self.value(a);
        let value = Tensor::new(va.shape().to_vec(), va.data().iter().zip(&mask).map(|(x, m)| x * m).collect())?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout(a, mask), rg))
    }

    /// Cross-entropy of a logit vector against a class index, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = self.value(logits).data();
        if target >= z.len() {
            return Err(Error::Contract(format!("class index {target} out of range for {} logits", z.len())));
        }
        let loss = log_sum_exp(z) - z[target];
        let rg = self.rg(logits);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(logits, target), rg))
    }

    /// Mean binary cross-entropy of logits against 0/1 targets.
    pub fn binary_cross_entropy(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = self.value(logits).data();
        if z.len() != targets.len() {
            return Err(dim_err("binary_cross_entropy", &[z.len()], &[targets.len()]));
        }
        let loss = z.iter().zip(targets).map(|(&x, &y)| bce_term(x, y)).sum::<f64>() / z.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(Tensor::scalar(loss), Op::BinaryCrossEntropy(logits, targets.to_vec()), rg))
    }

    /// Reverse sweep from a scalar `loss`, accumulating into the tape's gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut adj);
            match &mut self.grads[idx] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let send = |adj: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.rg(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            da[i * k + p] = dot(&g[i * n..(i + 1) * n], &tb.data()[p * n..(p + 1) * n]);
                        }
                    }
                    send(adj, *a, da);
                }
                if self.rg(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            for (d, &gc) in db[p * n..(p + 1) * n].iter_mut().zip(&g[i * n..(i + 1) * n]) {
                                *d += av * gc;
                            }
                        }
                    }
                    send(adj, *b, db);
                }
            }
            Op::Add(a, b) => {
                send(adj, *a, g.to_vec());
                send(adj, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                send(adj, *a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                send(adj, *b, g.iter().zip(va).map(|(g, x)| g * x).collect());
            }
            Op::MulScalar(a, s) => {
                let (va, k) = (self.value(*a).data(), self.value(*s).data()[0]);
                send(adj, *a, g.iter().map(|g| g * k).collect());
                send(adj, *s, vec![dot(g, va)]);
            }
            Op::Scale(a, k) => send(adj, *a, g.iter().map(|g| g * k).collect()),
            Op::Tanh(a) => send(adj, *a, g.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Sigmoid(a) => send(adj, *a, g.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Softmax(a) => {
                let n = node.value.cols();
                let mut da = vec![0.0; out.len()];
                for ((dst, y), gy) in da.chunks_mut(n).zip(out.chunks(n)).zip(g.chunks(n)) {
                    let inner = dot(gy, y);
                    for ((d, &yi), &gi) in dst.iter_mut().zip(y).zip(gy) {
                        *d = yi * (gi - inner);
                    }
                }
                send(adj, *a, da);
            }
            Op::MeanAxis0(a) => {
                let src = self.value(*a);
                let n = g.len();
                let m = src.len() / n;
                let da = (0..src.len()).map(|k| g[k % n] / m as f64).collect();
                send(adj, *a, da);
            }
            Op::Concat(parts) | Op::StackRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    send(adj, *p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::Slice(a, start) => {
                let mut da = vec![0.0; self.value(*a).len()];
                da[*start..*start + g.len()].copy_from_slice(g);
                send(adj, *a, da);
            }
            Op::Dot(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                send(adj, *a, vb.iter().map(|y| g[0] * y).collect());
                send(adj, *b, va.iter().map(|x| g[0] * x).collect());
            }
            Op::Dropout(a, mask) => send(adj, *a, g.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::CrossEntropy(a, target) => {
                let z = self.value(*a).data();
                let lse = log_sum_exp(z);
                let mut da: Vec<f64> = z.iter().map(|&x| g[0] * (x - lse).exp()).collect();
                da[*target] -= g[0];
                send(adj, *a, da);
            }
            Op::BinaryCrossEntropy(a, y) => {
                let z = self.value(*a).data();
                let n = z.len() as f64;
                send(adj, *a, z.iter().zip(y).map(|(&x, &t)| g[0] * (sigmoid(x) - t) / n).collect());
            }
        }
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `-(y ln σ(x) + (1 - y) ln(1 - σ(x)))` without overflow.
pub(crate) fn bce_term(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}
