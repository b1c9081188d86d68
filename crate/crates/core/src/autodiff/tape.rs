use std::collections::BTreeMap;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Lower bound applied to every `log` input.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    None,
    /// rhs is repeated along lhs's leading axis
    Rhs,
    /// lhs is repeated along rhs's leading axis
    Lhs,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var, Vec<bool>),
    Clamp(Var, f64, f64),
    Softmax(Var),
    LogSoftmax(Var),
    MeanBatch(Var),
    SumAll(Var),
    MeanAll(Var),
    SumLast(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Reshape(Var),
    StraightThrough(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Clamp(..) => "clamp",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::MeanBatch(..) => "mean_batch",
            Op::SumAll(..) => "sum",
            Op::MeanAll(..) => "mean",
            Op::SumLast(..) => "sum_last",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::Reshape(..) => "reshape",
            Op::StraightThrough(..) => "straight_through",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Eagerly evaluated computation record. Every op computes its value
/// immediately and appends a node; inputs always precede their consumers.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaves: BTreeMap<String, Var>,
    log_clamps: usize,
}

/// Gradients keyed by leaf name.
pub type GradMap = BTreeMap<String, Tensor>;

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

    /// Number of `log` inputs that were raised to [`LOG_CLAMP`].
    pub fn log_clamp_count(&self) -> usize {
        self.log_clamps
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf_var(&self, name: &str) -> Option<Var> {
        self.leaves.get(name).copied()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a named differentiable input.
    pub fn leaf(&mut self, name: impl Into<String>, value: Tensor) -> Result<Var> {
        let name = name.into();
        if self.leaves.contains_key(&name) {
            return Err(Error::invalid(format!("leaf `{name}` registered twice")));
        }
        let v = self.push(Op::Leaf, value, true);
        self.leaves.insert(name, v);
        Ok(v)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value, false)
    }

    /// Copies the value of `v` into a new constant node (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::shape("matmul", &[av.shape(), bv.shape()]));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out), rg))
    }

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            Ok(Broadcast::None)
        } else if sa.len() == sb.len() + 1 && &sa[1..] == sb {
            Ok(Broadcast::Rhs)
        } else if sb.len() == sa.len() + 1 && &sb[1..] == sa {
            Ok(Broadcast::Lhs)
        } else {
            Err(Error::shape(op, &[sa, sb]))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Var, Var, Broadcast) -> Op,
    ) -> Result<Var> {
        let bc = self.broadcast_kind(name, a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let value = match bc {
            Broadcast::None => Tensor::from_parts(
                av.shape().to_vec(),
                av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
            ),
            Broadcast::Rhs => {
                let w = bv.numel();
                Tensor::from_parts(
                    av.shape().to_vec(),
                    av.data()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| f(x, bv.data()[i % w]))
                        .collect(),
                )
            }
            Broadcast::Lhs => {
                let w = av.numel();
                Tensor::from_parts(
                    bv.shape().to_vec(),
                    bv.data()
                        .iter()
                        .enumerate()
                        .map(|(i, &y)| f(av.data()[i % w], y))
                        .collect(),
                )
            }
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(make(a, b, bc), value, rg))
    }

    /// Elementwise sum; one side may be broadcast along the other's leading axis.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(op, value, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| s * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_scalar(n, 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.unary(a, Op::Exp(a), f64::exp);
        if !self.value(v).all_finite() {
            self.nodes.pop();
            return Err(Error::Domain {
                op: "exp",
                detail: "overflow".into(),
            });
        }
        Ok(v)
    }

    /// Natural log. Inputs in `[0, LOG_CLAMP)` are raised to `LOG_CLAMP`
    /// (zero gradient there); negative or non-finite inputs are a domain error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if let Some(bad) = av.data().iter().find(|x| !(**x >= 0.0) || x.is_infinite()) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("input {bad}"),
            });
        }
        let mask: Vec<bool> = av.data().iter().map(|&x| x < LOG_CLAMP).collect();
        let value = av.map(|x| x.max(LOG_CLAMP).ln());
        self.log_clamps += mask.iter().filter(|&&m| m).count();
        let rg = self.rg(a);
        Ok(self.push(Op::Log(a, mask), value, rg))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Softmax over the last axis with max-subtraction.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let w = av.last_dim();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(w) {
            softmax_in_place(row);
        }
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        let rg = self.rg(a);
        self.push(Op::Softmax(a), value, rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let w = av.last_dim();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(w) {
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        let rg = self.rg(a);
        self.push(Op::LogSoftmax(a), value, rg)
    }

    /// Mean over the leading (batch) axis.
    pub fn mean_batch(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let b = av.shape()[0];
        let rest: Vec<usize> = if av.rank() > 1 {
            av.shape()[1..].to_vec()
        } else {
            vec![1]
        };
        let w = av.numel() / b;
        let mut out = vec![0.0; w];
        for chunk in av.data().chunks(w) {
            out.iter_mut().zip(chunk).for_each(|(o, &x)| *o += x);
        }
        out.iter_mut().for_each(|o| *o /= b as f64);
        let rg = self.rg(a);
        self.push(Op::MeanBatch(a), Tensor::from_parts(rest, out), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Op::SumAll(a), Tensor::scalar(s), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.data().iter().sum::<f64>() / av.numel() as f64;
        let rg = self.rg(a);
        self.push(Op::MeanAll(a), Tensor::scalar(s), rg)
    }

    /// Sum over the last axis; a vector reduces to shape `[1]`.
    pub fn sum_last(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let w = av.last_dim();
        let out: Vec<f64> = av.data().chunks(w).map(|r| r.iter().sum()).collect();
        let shape = if av.rank() > 1 {
            av.shape()[..av.rank() - 1].to_vec()
        } else {
            vec![1]
        };
        let rg = self.rg(a);
        self.push(Op::SumLast(a), Tensor::from_parts(shape, out), rg)
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let lead = {
            let s = self.value(*first).shape();
            s[..s.len() - 1].to_vec()
        };
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                let shapes: Vec<&[usize]> = parts.iter().map(|&q| self.value(q).shape()).collect();
                return Err(Error::shape("concat", &shapes));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let rows = self.value(*first).rows();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::from_parts(shape, out), rg))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        let w = av.last_dim();
        if start >= end || end > w {
            return Err(Error::shape("slice", &[av.shape(), &[start, end]]));
        }
        let out: Vec<f64> = av
            .data()
            .chunks(w)
            .flat_map(|r| r[start..end].iter().copied())
            .collect();
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        let rg = self.rg(a);
        Ok(self.push(Op::Slice(a, start, end), Tensor::from_parts(shape, out), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(Op::Reshape(a), value, rg))
    }

    /// One-hot argmax of each last-axis row in the forward value; the
    /// gradient passes through unchanged.
    pub fn straight_through(&mut self, a: Var) -> Var {
        let value = one_hot_rows(self.value(a));
        let rg = self.rg(a);
        self.push(Op::StraightThrough(a), value, rg)
    }

    /// Reverse-mode gradients of the scalar `output` with respect to the named leaves.
    pub fn backward(&self, output: Var, leaves: &[&str]) -> Result<GradMap> {
        let out_val = self.value(output);
        if !out_val.is_scalar() {
            return Err(Error::NonScalarOutput(out_val.shape().to_vec()));
        }
        let mut targets = Vec::with_capacity(leaves.len());
        for &name in leaves {
            let v = self
                .leaf_var(name)
                .ok_or_else(|| Error::LeafNotOnTape(name.to_string()))?;
            targets.push((name, v));
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::full(out_val.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut map = GradMap::new();
        for (name, v) in targets {
            let g = grads
                .get_mut(v.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
            map.insert(name.to_string(), g);
        }
        Ok(map)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing
                .data_mut()
                .iter_mut()
                .zip(delta.data())
                .for_each(|(e, d)| *e += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        f: impl Fn(usize, f64) -> f64,
        g: &Tensor,
    ) {
        if !self.rg(v) {
            return;
        }
        let delta = Tensor::from_parts(
            g.shape().to_vec(),
            g.data().iter().enumerate().map(|(i, &gi)| f(i, gi)).collect(),
        );
        self.accumulate(grads, v, delta);
    }

    /// Gradient for the broadcast operand: sum over the repeated leading axis.
    fn reduce_broadcast(target: &Tensor, full: Tensor) -> Tensor {
        let w = target.numel();
        let mut out = vec![0.0; w];
        for chunk in full.data().chunks(w) {
            out.iter_mut().zip(chunk).for_each(|(o, &x)| *o += x);
        }
        Tensor::from_parts(target.shape().to_vec(), out)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), true, &mut da, 0.0);
                    self.accumulate(grads, *a, Tensor::from_parts(vec![m, k], da));
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, g.data(), false, &mut db, 0.0);
                    self.accumulate(grads, *b, Tensor::from_parts(vec![k, n], db));
                }
            }
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let ga = g.clone();
                let gb = g.map(|x| sign * x);
                self.route_binary(grads, *a, *b, *bc, ga, gb);
            }
            Op::Mul(a, b, bc) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ga, gb) = match bc {
                    Broadcast::None => (
                        elementwise(g, |i, gi| gi * bv.data()[i]),
                        elementwise(g, |i, gi| gi * av.data()[i]),
                    ),
                    Broadcast::Rhs => {
                        let w = bv.numel();
                        (
                            elementwise(g, |i, gi| gi * bv.data()[i % w]),
                            elementwise(g, |i, gi| gi * av.data()[i]),
                        )
                    }
                    Broadcast::Lhs => {
                        let w = av.numel();
                        (
                            elementwise(g, |i, gi| gi * bv.data()[i]),
                            elementwise(g, |i, gi| gi * av.data()[i % w]),
                        )
                    }
                };
                self.route_binary(grads, *a, *b, *bc, ga, gb);
            }
            Op::Scale(a, s) => self.accumulate_with(grads, *a, |_, gi| s * gi, g),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => {
                self.accumulate_with(grads, *a, |i, gi| gi * (1.0 - y.data()[i].powi(2)), g)
            }
            Op::Sigmoid(a) => self.accumulate_with(
                grads,
                *a,
                |i, gi| gi * y.data()[i] * (1.0 - y.data()[i]),
                g,
            ),
            Op::Relu(a) => {
                let x = self.value(*a);
                self.accumulate_with(grads, *a, |i, gi| if x.data()[i] > 0.0 { gi } else { 0.0 }, g)
            }
            Op::Exp(a) => self.accumulate_with(grads, *a, |i, gi| gi * y.data()[i], g),
            Op::Log(a, mask) => {
                let x = self.value(*a);
                self.accumulate_with(
                    grads,
                    *a,
                    |i, gi| if mask[i] { 0.0 } else { gi / x.data()[i] },
                    g,
                )
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                self.accumulate_with(
                    grads,
                    *a,
                    |i, gi| {
                        let xi = x.data()[i];
                        if xi >= *lo && xi <= *hi {
                            gi
                        } else {
                            0.0
                        }
                    },
                    g,
                )
            }
            Op::Softmax(a) => {
                let w = y.last_dim();
                let mut dx = vec![0.0; y.numel()];
                for ((yr, gr), dr) in y
                    .data()
                    .chunks(w)
                    .zip(g.data().chunks(w))
                    .zip(dx.chunks_mut(w))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..w {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::from_parts(y.shape().to_vec(), dx));
            }
            Op::LogSoftmax(a) => {
                let w = y.last_dim();
                let mut dx = vec![0.0; y.numel()];
                for ((yr, gr), dr) in y
                    .data()
                    .chunks(w)
                    .zip(g.data().chunks(w))
                    .zip(dx.chunks_mut(w))
                {
                    let total: f64 = gr.iter().sum();
                    for j in 0..w {
                        dr[j] = gr[j] - yr[j].exp() * total;
                    }
                }
                self.accumulate(grads, *a, Tensor::from_parts(y.shape().to_vec(), dx));
            }
            Op::MeanBatch(a) => {
                let x = self.value(*a);
                let b = x.shape()[0] as f64;
                let w = g.numel();
                let dx = (0..x.numel()).map(|i| g.data()[i % w] / b).collect();
                self.accumulate(grads, *a, Tensor::from_parts(x.shape().to_vec(), dx));
            }
            Op::SumAll(a) | Op::MeanAll(a) => {
                let x = self.value(*a);
                let mut g0 = g.data()[0];
                if matches!(node.op, Op::MeanAll(..)) {
                    g0 /= x.numel() as f64;
                }
                self.accumulate(grads, *a, Tensor::full(x.shape(), g0));
            }
            Op::SumLast(a) => {
                let x = self.value(*a);
                let w = x.last_dim();
                let dx = (0..x.numel()).map(|i| g.data()[i / w]).collect();
                self.accumulate(grads, *a, Tensor::from_parts(x.shape().to_vec(), dx));
            }
            Op::Concat(parts) => {
                let total = y.last_dim();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.last_dim();
                    if self.rg(p) {
                        let dx = g
                            .data()
                            .chunks(total)
                            .flat_map(|r| r[offset..offset + w].iter().copied())
                            .collect();
                        self.accumulate(grads, p, Tensor::from_parts(pv.shape().to_vec(), dx));
                    }
                    offset += w;
                }
            }
            Op::Slice(a, start, end) => {
                let x = self.value(*a);
                let w = x.last_dim();
                let sw = end - start;
                let mut dx = vec![0.0; x.numel()];
                for (dr, gr) in dx.chunks_mut(w).zip(g.data().chunks(sw)) {
                    dr[*start..*end].copy_from_slice(gr);
                }
                self.accumulate(grads, *a, Tensor::from_parts(x.shape().to_vec(), dx));
            }
            Op::Reshape(a) | Op::StraightThrough(a) => {
                let x = self.value(*a);
                self.accumulate(
                    grads,
                    *a,
                    Tensor::from_parts(x.shape().to_vec(), g.data().to_vec()),
                );
            }
        }
    }

    fn route_binary(
        &self,
        grads: &mut [Option<Tensor>],
        a: Var,
        b: Var,
        bc: Broadcast,
        ga: Tensor,
        gb: Tensor,
    ) {
        let (ga, gb) = match bc {
            Broadcast::None => (ga, gb),
            Broadcast::Rhs => (ga, Self::reduce_broadcast(self.value(b), gb)),
            Broadcast::Lhs => (Self::reduce_broadcast(self.value(a), ga), gb),
        };
        self.accumulate(grads, a, ga);
        self.accumulate(grads, b, gb);
    }

    /// Op name of the node behind `v` (diagnostics).
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }
}

fn elementwise(g: &Tensor, f: impl Fn(usize, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        g.shape().to_vec(),
        g.data().iter().enumerate().map(|(i, &gi)| f(i, gi)).collect(),
    )
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn one_hot_rows(t: &Tensor) -> Tensor {
    let w = t.last_dim();
    let mut out = vec![0.0; t.numel()];
    for (src, dst) in t.data().chunks(w).zip(out.chunks_mut(w)) {
        dst[argmax(src)] = 1.0;
    }
    Tensor::from_parts(t.shape().to_vec(), out)
}
