//! Eager reverse-mode tape over [`Tensor`] values.
//!
//! Every operation computes its value immediately and records enough
//! information to run its analytic backward pass. A gradient reaching a node
//! along several paths is summed.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::{Gradients, ModelParams};
use crate::tensor::{Precision, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `log softmax(x)` computed with max subtraction.
pub fn log_softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Activation, Var),
    Softmax(Var),
    CrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
    Concat { parts: Vec<Var>, axis: usize },
    Row(Var, usize),
    Reshape(Var),
    Transpose(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    precision: Precision,
    params: HashMap<String, Var>,
    param_order: Vec<(String, Var)>,
}

impl Graph {
    pub fn new(precision: Precision) -> Self {
        Graph {
            nodes: Vec::new(),
            precision,
            params: HashMap::new(),
            param_order: Vec::new(),
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
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

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.grad()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, shape: Vec<usize>, mut data: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.precision.round_slice(&mut data);
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, data, requires_grad),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        let data = t.data().to_vec();
        self.push(shape, data, Op::Leaf, false)
    }

    /// A differentiable input that is not a named parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        let data = t.data().to_vec();
        self.push(shape, data, Op::Leaf, true)
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Var {
        self.constant(Tensor::vector(data))
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    /// Binds parameter `name` into the graph once; later calls reuse the node.
    pub fn param(&mut self, params: &ModelParams, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let t = params.expect(name);
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        self.param_order.push((name.to_string(), v));
        v
    }

    /// Copy of a value with the gradient path cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v);
        let (shape, data) = (t.shape().to_vec(), t.data().to_vec());
        self.push(shape, data, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() > 2 {
            return Err(Error::Shape {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k) = ta.dims2();
        let (k2, n) = tb.dims2();
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                let row = &ad[i * k..(i + 1) * k];
                *o = row.iter().zip(bd).map(|(x, y)| x * y).sum();
            }
        } else {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for (kk, &aik) in ad[i * k..(i + 1) * k].iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    for (o, &b) in orow.iter_mut().zip(&bd[kk * n..(kk + 1) * n]) {
                        *o += aik * b;
                    }
                }
            }
        }
        let shape = if tb.rank() == 1 { vec![m] } else { vec![m, n] };
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(shape, out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(shape, data, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data = self.data(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(shape, data, Op::Scale(a, c), rg)
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let data = self.data(x).iter().map(|&v| kind.apply(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        self.push(shape, data, Op::Act(kind, x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(Activation::Relu, x)
    }

    /// Softmax over all entries of `x` (treated as a flat vector).
    pub fn softmax(&mut self, x: Var) -> Var {
        let data = softmax_slice(self.data(x));
        let shape = vec![data.len()];
        let rg = self.requires_grad(x);
        self.push(shape, data, Op::Softmax(x), rg)
    }

    /// `-log softmax(logits)[target]` as a 1-element tensor.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let x = self.data(logits);
        if target >= x.len() {
            return Err(Error::Index {
                what: "cross_entropy logits",
                index: target,
                len: x.len(),
            });
        }
        let logp = log_softmax_slice(x);
        let probs: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
        let loss = -logp[target];
        let rg = self.requires_grad(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            rg,
        ))
    }

    /// Concatenation along `axis` (0 or 1) of rank-1 or rank-2 tensors.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let rank = self.value(first).rank();
        let mismatch = |g: &Graph, v: Var| Error::Shape {
            op: "concat",
            left: g.shape(first).to_vec(),
            right: g.shape(v).to_vec(),
        };
        let (shape, data) = match (rank, axis) {
            (1, 0) | (2, 0) => {
                let tail = &self.shape(first)[1..];
                let mut lead = 0;
                for &p in parts {
                    if self.value(p).rank() != rank || &self.shape(p)[1..] != tail {
                        return Err(mismatch(self, p));
                    }
                    lead += self.shape(p)[0];
                }
                let data: Vec<f64> = parts.iter().flat_map(|&p| self.data(p).iter().copied()).collect();
                let mut shape = vec![lead];
                shape.extend_from_slice(tail);
                (shape, data)
            }
            (2, 1) => {
                let rows = self.shape(first)[0];
                let mut cols = 0;
                for &p in parts {
                    if self.value(p).rank() != 2 || self.shape(p)[0] != rows {
                        return Err(mismatch(self, p));
                    }
                    cols += self.shape(p)[1];
                }
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(r));
                    }
                }
                (vec![rows, cols], data)
            }
            _ => {
                return Err(Error::invalid(format!(
                    "concat axis {axis} unsupported for rank {rank}"
                )))
            }
        };
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(
            shape,
            data,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Row `i` of a rank-2 tensor, as a rank-1 tensor.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::invalid(format!("row of rank-{} tensor", t.rank())));
        }
        let (r, c) = t.dims2();
        if i >= r {
            return Err(Error::Index {
                what: "row",
                index: i,
                len: r,
            });
        }
        let data = t.row(i).to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(vec![c], data, Op::Row(x, i), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() || shape.contains(&0) {
            return Err(Error::Shape {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape.to_vec(),
            });
        }
        let data = self.data(x).to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(shape.to_vec(), data, Op::Reshape(x), rg))
    }

    /// Transpose of a rank-2 tensor; a rank-1 tensor becomes a 1×n row.
    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let d = t.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = d[i * c + j];
            }
        }
        let rg = self.requires_grad(x);
        self.push(vec![c, r], data, Op::Transpose(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        let rg = self.requires_grad(x);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    /// Sum of several same-shaped tensors.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs
            .split_first()
            .ok_or_else(|| Error::invalid("add_all of zero tensors"))?;
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }

    /// `weight * a + (1 - weight) * b`.
    pub fn mix(&mut self, weight: f64, a: Var, b: Var) -> Result<Var> {
        let wa = self.scale(a, weight);
        let wb = self.scale(b, 1.0 - weight);
        self.add(wa, wb)
    }

    /// Stacks rank-1 tensors of equal length into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let n = rows.len();
        let cat = self.concat(rows, 0)?;
        let h = self.value(cat).numel() / n;
        self.reshape(cat, &[n, h])
    }

    /// Reverse pass from scalar `loss`; gradients of earlier nodes are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::invalid("backward from non-scalar node"));
        }
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
        self.nodes[loss.0].value.grad_mut()[0] = 1.0;
        let precision = self.precision;
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.value.requires_grad() || node.value.grad().iter().all(|&g| g == 0.0) {
                continue;
            }
            let gout = node.value.grad();
            let out = node.value.data();
            backprop(&node.op, gout, out, before);
            if precision == Precision::Standard {
                for p in parents(&node.op) {
                    precision.round_slice(before[p.0].value.grad_mut());
                }
            }
        }
        Ok(())
    }

    /// Drops every node from index `len` on, including parameter bindings.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.params.retain(|_, v| v.0 < len);
        self.param_order.retain(|(_, v)| v.0 < len);
    }

    /// Gradients of every bound parameter after [`Graph::backward`].
    pub fn param_grads(&self) -> Gradients {
        let mut g = Gradients::default();
        for (name, v) in &self.param_order {
            g.insert(name, self.grad(*v).to_vec());
        }
        g
    }

    pub fn bound_params(&self) -> impl Iterator<Item = &str> {
        self.param_order.iter().map(|(n, _)| n.as_str())
    }
}

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::Act(_, a)
        | Op::Softmax(a)
        | Op::Row(a, _)
        | Op::Reshape(a)
        | Op::Transpose(a)
        | Op::Sum(a) => vec![*a],
        Op::CrossEntropy { logits, .. } => vec![*logits],
        Op::Concat { parts, .. } => parts.clone(),
    }
}

fn backprop(op: &Op, gout: &[f64], out: &[f64], nodes: &mut [Node]) {
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = nodes[a.0].value.dims2();
            let n = gout.len() / m;
            if nodes[a.0].value.requires_grad() {
                // dA = dC · Bᵀ
                let bd = nodes[b.0].value.data().to_vec();
                let ga = nodes[a.0].value.grad_mut();
                for i in 0..m {
                    let gi = &gout[i * n..(i + 1) * n];
                    for kk in 0..k {
                        let brow = &bd[kk * n..(kk + 1) * n];
                        ga[i * k + kk] += gi.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            if nodes[b.0].value.requires_grad() {
                // dB = Aᵀ · dC
                let ad = nodes[a.0].value.data().to_vec();
                let gb = nodes[b.0].value.grad_mut();
                for i in 0..m {
                    let gi = &gout[i * n..(i + 1) * n];
                    for kk in 0..k {
                        let aik = ad[i * k + kk];
                        if aik == 0.0 {
                            continue;
                        }
                        for (g, &d) in gb[kk * n..(kk + 1) * n].iter_mut().zip(gi) {
                            *g += aik * d;
                        }
                    }
                }
            }
        }
        Op::Add(a, b) => {
            accumulate(nodes, *a, gout, |g, _| g);
            accumulate(nodes, *b, gout, |g, _| g);
        }
        Op::Sub(a, b) => {
            accumulate(nodes, *a, gout, |g, _| g);
            accumulate(nodes, *b, gout, |g, _| -g);
        }
        Op::Mul(a, b) => {
            let ad = nodes[a.0].value.data().to_vec();
            let bd = nodes[b.0].value.data().to_vec();
            accumulate(nodes, *a, gout, |g, i| g * bd[i]);
            accumulate(nodes, *b, gout, |g, i| g * ad[i]);
        }
        Op::Scale(a, c) => accumulate(nodes, *a, gout, |g, _| g * c),
        Op::Act(kind, x) => {
            let xd = nodes[x.0].value.data().to_vec();
            accumulate(nodes, *x, gout, |g, i| g * kind.derivative(xd[i], out[i]));
        }
        Op::Softmax(x) => {
            let dot: f64 = gout.iter().zip(out).map(|(g, y)| g * y).sum();
            accumulate(nodes, *x, gout, |g, i| out[i] * (g - dot));
        }
        Op::CrossEntropy {
            logits,
            target,
            probs,
        } => {
            let g = gout[0];
            let t = *target;
            let dl: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(i, &p)| g * (p - if i == t { 1.0 } else { 0.0 }))
                .collect();
            accumulate(nodes, *logits, &dl, |d, _| d);
        }
        Op::Concat { parts, axis } => {
            if *axis == 0 {
                let mut off = 0;
                for &p in parts {
                    let len = nodes[p.0].value.numel();
                    accumulate(nodes, p, &gout[off..off + len], |g, _| g);
                    off += len;
                }
            } else {
                let total_cols: usize = parts.iter().map(|p| nodes[p.0].value.dims2().1).sum();
                let mut col = 0;
                for &p in parts {
                    let (rows, c) = nodes[p.0].value.dims2();
                    if nodes[p.0].value.requires_grad() {
                        let gp = nodes[p.0].value.grad_mut();
                        for r in 0..rows {
                            for j in 0..c {
                                gp[r * c + j] += gout[r * total_cols + col + j];
                            }
                        }
                    }
                    col += c;
                }
            }
        }
        Op::Row(x, i) => {
            let c = gout.len();
            if nodes[x.0].value.requires_grad() {
                let gx = nodes[x.0].value.grad_mut();
                for (g, &d) in gx[i * c..(i + 1) * c].iter_mut().zip(gout) {
                    *g += d;
                }
            }
        }
        Op::Reshape(x) => accumulate(nodes, *x, gout, |g, _| g),
        Op::Transpose(x) => {
            let (r, c) = nodes[x.0].value.dims2();
            if nodes[x.0].value.requires_grad() {
                let gx = nodes[x.0].value.grad_mut();
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] += gout[j * r + i];
                    }
                }
            }
        }
        Op::Sum(x) => {
            let g = gout[0];
            accumulate(nodes, *x, &[], |_, _| g);
        }
    }
}

/// `grad[x][i] += f(gout[i], i)`; `gout` may be empty when `f` ignores it.
fn accumulate(nodes: &mut [Node], x: Var, gout: &[f64], f: impl Fn(f64, usize) -> f64) {
    let t = &mut nodes[x.0].value;
    if !t.requires_grad() {
        return;
    }
    let gx = t.grad_mut();
    if gout.is_empty() {
        for (i, g) in gx.iter_mut().enumerate() {
            *g += f(0.0, i);
        }
    } else {
        for (i, (g, &d)) in gx.iter_mut().zip(gout).enumerate() {
            *g += f(d, i);
        }
    }
}
