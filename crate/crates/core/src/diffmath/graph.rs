//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in execution order, so the node list
//! is already topologically sorted and backward is a single reverse sweep.
//! Parameters are borrowed, not copied: a graph built over a model lives no
//! longer than the borrow, and gradients are read back before the model is
//! mutated by an optimizer.

use std::borrow::Cow;
use std::collections::HashMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Neg,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

/// How the right operand of a binary op is expanded onto the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rank-1 rhs repeated over every row of lhs
    Row,
    /// single-element rhs
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var, Broadcast),
    Unary(Unary, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    grads: HashMap<usize, Tensor>,
    params: HashMap<usize, Var>,
    track: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: HashMap::new(),
            params: HashMap::new(),
            track: true,
        }
    }

    /// A graph whose parameters never require gradients. Used for target
    /// computations and rollouts.
    pub fn no_grad() -> Self {
        Graph {
            track: false,
            ..Self::new()
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.track
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    /// Binds a borrowed parameter. Binding the same tensor twice yields the
    /// same node, so parameters shared across time steps accumulate one grad.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        let key = t as *const Tensor as usize;
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let track = self.track;
        let v = self.push(Cow::Borrowed(t), Op::Leaf, track);
        self.params.insert(key, v);
        v
    }

    /// Owned leaf with explicit gradient requirement.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        let rg = requires_grad && self.track;
        self.push(Cow::Owned(t), Op::Leaf, rg)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    /// Copies the value into a fresh constant; no gradient passes through.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v.0)
    }

    /// Gradient of a bound parameter, looked up by the tensor it borrows.
    pub fn param_grad(&self, t: &Tensor) -> Option<&Tensor> {
        let key = t as *const Tensor as usize;
        self.params.get(&key).and_then(|v| self.grads.get(&v.0))
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
            false,
        );
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.derived(value, Op::MatMul(a, b), &[a, b]))
    }

    // ---- elementwise ----------------------------------------------------

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(Broadcast::Same)
        } else if tb.len() == 1 && tb.rank() <= 1 {
            Ok(Broadcast::Scalar)
        } else if tb.rank() == 1 && ta.rank() >= 1 && ta.cols() == tb.len() {
            Ok(Broadcast::Row)
        } else {
            Err(Error::dim(op, ta.shape(), tb.shape()))
        }
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let bc = self.broadcast_kind(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b).data();
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let cols = ta.cols();
        let data: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match bc {
                    Broadcast::Same => tb[i],
                    Broadcast::Row => tb[i % cols],
                    Broadcast::Scalar => tb[0],
                };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(ta.shape(), data)?;
        Ok(self.derived(value, Op::Binary(kind, a, b, bc), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let t = self.value(a);
        let f: fn(f64) -> f64 = match kind {
            Unary::Tanh => f64::tanh,
            Unary::Relu => |x| if x > 0.0 { x } else { 0.0 },
            Unary::Sigmoid => sigmoid,
            Unary::Softplus => softplus,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
            Unary::Neg => |x| -x,
            Unary::Square => |x| x * x,
        };
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(t.shape(), data).expect("same shape");
        self.derived(value, Op::Unary(kind, a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let value =
            Tensor::new(t.shape(), t.data().iter().map(|x| x * c).collect()).expect("same shape");
        self.derived(value, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let value =
            Tensor::new(t.shape(), t.data().iter().map(|x| x + c).collect()).expect("same shape");
        self.derived(value, Op::AddScalar(a), &[a])
    }

    /// Hard clamp; gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(a);
        let value = Tensor::new(
            t.shape(),
            t.data().iter().map(|x| x.clamp(lo, hi)).collect(),
        )
        .expect("same shape");
        self.derived(value, Op::Clamp(a, lo, hi), &[a])
    }

    /// Row-wise normalization with biased variance, `eps` inside the root,
    /// followed by an affine `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.cols();
        if tx.rank() == 0 || d == 0 {
            return Err(Error::dim("layer_norm", tx.shape(), &[]));
        }
        if eps <= 0.0 {
            return Err(Error::contract("layer_norm eps must be positive"));
        }
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(Error::dim("layer_norm", tx.shape(), tg.shape()));
        }
        let rows = tx.len() / d;
        let mut xhat = vec![0.0; tx.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; tx.len()];
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mu) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * tg.data()[j] + tb.data()[j];
            }
        }
        let value = Tensor::new(tx.shape(), out)?;
        Ok(self.derived(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        ))
    }

    // ---- reductions -----------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.derived(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.derived(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// `[m×n] → [m]`
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::dim("sum_cols", t.shape(), &[]));
        }
        let c = t.cols();
        let data = t.data().chunks(c).map(|r| r.iter().sum()).collect();
        Ok(self.derived(Tensor::vector(data), Op::SumCols(a), &[a]))
    }

    // ---- structural -----------------------------------------------------

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || len == 0 || start + len > t.cols() {
            return Err(Error::dim("slice_cols", t.shape(), &[start, len]));
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(t.rows() * len);
        for r in t.data().chunks(c) {
            data.extend_from_slice(&r[start..start + len]);
        }
        let value = Tensor::new(&[t.rows(), len], data)?;
        Ok(self.derived(value, Op::SliceCols(a, start), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols of nothing"))?;
        let rows = self.value(*first).rows();
        let mut width = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(Error::dim("concat_cols", self.shape(*first), t.shape()));
            }
            width += t.cols();
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::new(&[rows, width], data)?;
        Ok(self.derived(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || len == 0 || start + len > t.rows() {
            return Err(Error::dim("slice_rows", t.shape(), &[start, len]));
        }
        let c = t.cols();
        let data = t.data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::new(&[len, c], data)?;
        Ok(self.derived(value, Op::SliceRows(a, start), &[a]))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || idx.is_empty() || idx.iter().any(|&i| i >= t.rows()) {
            return Err(Error::dim("gather_rows", t.shape(), &[idx.len()]));
        }
        let mut data = Vec::with_capacity(idx.len() * t.cols());
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::new(&[idx.len(), t.cols()], data)?;
        Ok(self.derived(value, Op::GatherRows(a, idx.to_vec()), &[a]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_rows of nothing"))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.cols() != cols {
                return Err(Error::dim("concat_rows", self.shape(*first), t.shape()));
            }
            rows += t.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(&[rows, cols], data)?;
        Ok(self.derived(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    // ---- backward -------------------------------------------------------

    /// Accumulates `d loss / d leaf` into every gradient-requiring leaf.
    /// Calling it again without [`Graph::zero_grad`] adds to the totals.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    let shape = node.value.shape().to_vec();
                    match self.grads.get_mut(&i) {
                        Some(acc) => {
                            for (a, v) in acc.data_mut().iter_mut().zip(&g) {
                                *a += v;
                            }
                        }
                        None => {
                            self.grads.insert(i, Tensor::new(&shape, g)?);
                        }
                    }
                }
                op => {
                    let nodes = &self.nodes;
                    let val = |v: Var| -> &Tensor { &nodes[v.0].value };
                    let needs = |v: Var| nodes[v.0].requires_grad;
                    let mut send = |v: Var, grad: Vec<f64>| accumulate(&mut adj, v, grad);
                    backprop_op(op, &node.value, &g, val, needs, &mut send);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, grad: Vec<f64>) {
    match &mut adj[v.0] {
        Some(acc) => {
            for (a, g) in acc.iter_mut().zip(grad) {
                *a += g;
            }
        }
        slot => *slot = Some(grad),
    }
}

fn backprop_op<'t>(
    op: &Op,
    out: &Tensor,
    g: &[f64],
    val: impl Fn(Var) -> &'t Tensor,
    needs: impl Fn(Var) -> bool,
    send: &mut impl FnMut(Var, Vec<f64>),
) {
    match op {
        Op::Leaf => unreachable!(),
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
            if needs(*a) {
                // dA = G · Bᵀ
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g, (n, 1), tb.data(), (1, n), &mut da, false);
                send(*a, da);
            }
            if needs(*b) {
                // dB = Aᵀ · G
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, ta.data(), (1, k), g, (n, 1), &mut db, false);
                send(*b, db);
            }
        }
        Op::Binary(kind, a, b, bc) => {
            let (ta, tb) = (val(*a), val(*b));
            let cols = ta.cols();
            let bidx = |i: usize| match bc {
                Broadcast::Same => i,
                Broadcast::Row => i % cols,
                Broadcast::Scalar => 0,
            };
            if needs(*a) {
                let da = match kind {
                    Binary::Add | Binary::Sub => g.to_vec(),
                    Binary::Mul => g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| gi * tb.data()[bidx(i)])
                        .collect(),
                };
                send(*a, da);
            }
            if needs(*b) {
                let mut db = vec![0.0; tb.len()];
                for (i, gi) in g.iter().enumerate() {
                    let contrib = match kind {
                        Binary::Add => *gi,
                        Binary::Sub => -gi,
                        Binary::Mul => gi * ta.data()[i],
                    };
                    db[bidx(i)] += contrib;
                }
                send(*b, db);
            }
        }
        Op::Unary(kind, a) => {
            let x = val(*a).data();
            let y = out.data();
            let d: Vec<f64> = g
                .iter()
                .enumerate()
                .map(|(i, gi)| {
                    gi * match kind {
                        Unary::Tanh => 1.0 - y[i] * y[i],
                        Unary::Relu => {
                            if x[i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Sigmoid => y[i] * (1.0 - y[i]),
                        Unary::Softplus => sigmoid(x[i]),
                        Unary::Exp => y[i],
                        Unary::Log => 1.0 / x[i],
                        Unary::Neg => -1.0,
                        Unary::Square => 2.0 * x[i],
                    }
                })
                .collect();
            send(*a, d);
        }
        Op::Scale(a, c) => send(*a, g.iter().map(|v| v * c).collect()),
        Op::AddScalar(a) => send(*a, g.to_vec()),
        Op::Clamp(a, lo, hi) => {
            let x = val(*a).data();
            let d = g
                .iter()
                .zip(x)
                .map(|(gi, xi)| if xi < lo || xi > hi { 0.0 } else { *gi })
                .collect();
            send(*a, d);
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        } => {
            let tg = val(*gain).data();
            let d = tg.len();
            let rows = xhat.len() / d;
            if needs(*x) {
                let mut dx = vec![0.0; xhat.len()];
                for r in 0..rows {
                    let o = r * d;
                    let mut mean_dxh = 0.0;
                    let mut mean_dxh_xh = 0.0;
                    for j in 0..d {
                        let dxh = g[o + j] * tg[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xhat[o + j];
                    }
                    mean_dxh /= d as f64;
                    mean_dxh_xh /= d as f64;
                    for j in 0..d {
                        let dxh = g[o + j] * tg[j];
                        dx[o + j] = rstd[r] * (dxh - mean_dxh - xhat[o + j] * mean_dxh_xh);
                    }
                }
                send(*x, dx);
            }
            if needs(*gain) {
                let mut dg = vec![0.0; d];
                for (i, gi) in g.iter().enumerate() {
                    dg[i % d] += gi * xhat[i];
                }
                send(*gain, dg);
            }
            if needs(*bias) {
                let mut db = vec![0.0; d];
                for (i, gi) in g.iter().enumerate() {
                    db[i % d] += gi;
                }
                send(*bias, db);
            }
        }
        Op::Sum(a) => send(*a, vec![g[0]; val(*a).len()]),
        Op::Mean(a) => {
            let n = val(*a).len();
            send(*a, vec![g[0] / n as f64; n]);
        }
        Op::SumCols(a) => {
            let t = val(*a);
            let c = t.cols();
            send(*a, (0..t.len()).map(|i| g[i / c]).collect());
        }
        Op::SliceCols(a, start) => {
            let t = val(*a);
            let (c, w) = (t.cols(), out.cols());
            let mut d = vec![0.0; t.len()];
            for r in 0..t.rows() {
                d[r * c + start..r * c + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
            }
            send(*a, d);
        }
        Op::ConcatCols(parts) => {
            let w = out.cols();
            let mut off = 0;
            for &p in parts {
                let pc = val(p).cols();
                if needs(p) {
                    let mut d = Vec::with_capacity(val(p).len());
                    for r in 0..out.rows() {
                        d.extend_from_slice(&g[r * w + off..r * w + off + pc]);
                    }
                    send(p, d);
                }
                off += pc;
            }
        }
        Op::SliceRows(a, start) => {
            let t = val(*a);
            let c = t.cols();
            let mut d = vec![0.0; t.len()];
            d[start * c..start * c + g.len()].copy_from_slice(g);
            send(*a, d);
        }
        Op::GatherRows(a, idx) => {
            let t = val(*a);
            let c = t.cols();
            let mut d = vec![0.0; t.len()];
            for (k, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    d[i * c + j] += g[k * c + j];
                }
            }
            send(*a, d);
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for &p in parts {
                let n = val(p).len();
                if needs(p) {
                    send(p, g[off..off + n].to_vec());
                }
                off += n;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// `c (m×n) = a (m×k) · b (k×n)` with (row, col) strides for each operand.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: extents checked above; strides describe in-bounds row-major or
    // transposed views of the given slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
