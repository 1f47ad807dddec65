//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends one node holding its output value and the
//! handles of its inputs. Nodes are only ever appended, so the tape is in
//! topological order by construction and [`Tape::backward`] is a single
//! reverse sweep. A tape is single-threaded; independent tapes share nothing.

use crate::tensor::{axis_extents, Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Second operand broadcast over the leading dimensions of the first.
    AddBroadcast(Var, Var),
    MulBroadcast(Var, Var),
    /// Multiplies each last-axis row of the first operand by one entry of the second.
    ScaleRows(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Powf(Var, f64),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Expand(Var, usize),
    Sum(Var, usize),
    SumAll(Var),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. See the module docs.
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`Tape::backward`] call with respect to `v`, if
    /// `v` was reachable from the loss and requires a gradient.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_map(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    fn map(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|&p| f(p)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push(name, value, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("add", a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("sub", a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("mul", a, b, Op::Mul(a, b), |p, q| p * q)
    }

    fn check_trailing(&self, op: &'static str, x: Var, b: Var) -> Result<()> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs {
            return Err(TensorError::ShapeMismatch {
                op,
                left: xs.to_vec(),
                right: bs.to_vec(),
            });
        }
        Ok(())
    }

    /// `x + b` where `b` matches the trailing dimensions of `x` (bias add).
    pub fn add_broadcast(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check_trailing("add_broadcast", x, b)?;
        let bv = self.value(b).data();
        let n = bv.len();
        let xv = self.value(x);
        let data = xv.data().iter().enumerate().map(|(i, &p)| p + bv[i % n]).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("add_broadcast", value, Op::AddBroadcast(x, b), &[x, b])
    }

    /// `x * b` where `b` matches the trailing dimensions of `x`.
    pub fn mul_broadcast(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check_trailing("mul_broadcast", x, b)?;
        let bv = self.value(b).data();
        let n = bv.len();
        let xv = self.value(x);
        let data = xv.data().iter().enumerate().map(|(i, &p)| p * bv[i % n]).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("mul_broadcast", value, Op::MulBroadcast(x, b), &[x, b])
    }

    /// Multiplies every last-axis row of `x` by the matching entry of
    /// `scale`, whose shape is `x`'s shape without the last axis.
    pub fn scale_rows(&mut self, x: Var, scale: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.is_empty() || xs[..xs.len() - 1] != *self.shape(scale) {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                left: xs.to_vec(),
                right: self.shape(scale).to_vec(),
            });
        }
        let d = *xs.last().unwrap();
        let sv = self.value(scale).data();
        let xv = self.value(x);
        let data = xv.data().iter().enumerate().map(|(i, &p)| p * sv[i / d]).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push("scale_rows", value, Op::ScaleRows(x, scale), &[x, scale])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.map("scale", x, Op::Scale(x, c), |p| p * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.map("add_scalar", x, Op::AddScalar(x), |p| p + c)
    }

    /// `c - x`, handy for complements such as `1 - p`.
    pub fn rsub_scalar(&mut self, c: f64, x: Var) -> Result<Var> {
        let neg = self.scale(x, -1.0)?;
        self.add_scalar(neg, c)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map("exp", x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.map("log", x, Op::Log(x), f64::ln)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map("sigmoid", x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map("tanh", x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map("relu", x, Op::Relu(x), |p| p.max(0.0))
    }

    pub fn powf(&mut self, x: Var, exponent: f64) -> Result<Var> {
        self.map("powf", x, Op::Powf(x, exponent), |p| p.powf(exponent))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.map("clamp", x, Op::Clamp(x, lo, hi), |p| p.clamp(lo, hi))
    }

    /// Matrix product.
    ///
    /// * `a: [.., m, k]` with `b: [k, n]` multiplies every leading slice of
    ///   `a` by the shared `b` (dense layers over sequences).
    /// * `a: [B, m, k]` with `b: [B, k, n]` is a batched product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            left: ash.clone(),
            right: bsh.clone(),
        };
        if ash.len() < 2 || !(bsh.len() == 2 || (bsh.len() == 3 && ash.len() == 3 && ash[0] == bsh[0])) {
            return Err(mismatch());
        }
        let k = ash[ash.len() - 1];
        if bsh[bsh.len() - 2] != k {
            return Err(mismatch());
        }
        let n = bsh[bsh.len() - 1];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out_shape = ash[..ash.len() - 1].to_vec();
        out_shape.push(n);
        let mut out = vec![0.0; out_shape.iter().product()];
        if bsh.len() == 2 {
            let m = av.len() / k;
            gemm(m, k, n, av, false, bv, false, &mut out, false);
        } else {
            let (batch, m) = (ash[0], ash[1]);
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    false,
                    &bv[i * k * n..(i + 1) * k * n],
                    false,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let value = Tensor::new(out_shape, out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.len() < 2 {
            return Err(TensorError::InvalidAxis {
                op: "transpose",
                axis: 1,
                rank: sh.len(),
            });
        }
        let (r, c) = (sh[sh.len() - 2], sh[sh.len() - 1]);
        let xv = self.value(x).data();
        let mut out = vec![0.0; xv.len()];
        for (src, dst) in xv.chunks(r * c).zip(out.chunks_mut(r * c)) {
            transpose_into(src, r, c, dst);
        }
        let mut out_shape = sh;
        let len = out_shape.len();
        out_shape.swap(len - 1, len - 2);
        let value = Tensor::new(out_shape, out)?;
        self.push("transpose", value, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                rank: base.len(),
            });
        }
        let mut total = 0;
        for &p in parts {
            let sh = self.shape(p);
            let compatible = sh.len() == base.len()
                && sh.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: base.clone(),
                    right: sh.to_vec(),
                });
            }
            total += sh[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_extents(&out_shape, axis);
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let pv = self.value(p);
                let chunk = pv.shape()[axis] * inner;
                out.extend_from_slice(&pv.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, out)?;
        self.push("concat", value, Op::Concat(parts.to_vec(), axis), parts)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if axis >= sh.len() {
            return Err(TensorError::InvalidAxis {
                op: "slice",
                axis,
                rank: sh.len(),
            });
        }
        if start >= end || end > sh[axis] {
            return Err(TensorError::Invalid {
                op: "slice",
                msg: format!("range {start}..{end} invalid for axis of length {}", sh[axis]),
            });
        }
        let (outer, len, inner) = axis_extents(&sh, axis);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&xv[base + start * inner..base + end * inner]);
        }
        let mut out_shape = sh;
        out_shape[axis] = end - start;
        let value = Tensor::new(out_shape, out)?;
        self.push("slice", value, Op::Slice(x, axis, start), &[x])
    }

    /// Inserts a new axis at `axis` holding `n` copies of `x`.
    pub fn expand(&mut self, x: Var, axis: usize, n: usize) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if axis > sh.len() || n == 0 {
            return Err(TensorError::InvalidAxis {
                op: "expand",
                axis,
                rank: sh.len(),
            });
        }
        let outer: usize = sh[..axis].iter().product();
        let inner: usize = sh[axis..].iter().product();
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            for _ in 0..n {
                out.extend_from_slice(&xv[o * inner..(o + 1) * inner]);
            }
        }
        let mut out_shape = sh;
        out_shape.insert(axis, n);
        let value = Tensor::new(out_shape, out)?;
        self.push("expand", value, Op::Expand(x, axis), &[x])
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if axis >= sh.len() {
            return Err(TensorError::InvalidAxis {
                op: "sum_axis",
                axis,
                rank: sh.len(),
            });
        }
        let (outer, len, inner) = axis_extents(&sh, axis);
        let xv = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for r in 0..len {
                let src = &xv[(o * len + r) * inner..(o * len + r + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut out_shape = sh;
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, out)?;
        self.push("sum_axis", value, Op::Sum(x, axis), &[x])
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = *self.shape(x).get(axis).ok_or(TensorError::InvalidAxis {
            op: "mean_axis",
            axis,
            rank: self.shape(x).len(),
        })?;
        let s = self.sum_axis(x, axis)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Softmax along `axis`, stabilised by subtracting the slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if axis >= sh.len() {
            return Err(TensorError::InvalidAxis {
                op: "softmax",
                axis,
                rank: sh.len(),
            });
        }
        let (outer, len, inner) = axis_extents(&sh, axis);
        let xv = self.value(x).data();
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |r: usize| (o * len + r) * inner + i;
                let max = (0..len).map(|r| xv[idx(r)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for r in 0..len {
                    let e = (xv[idx(r)] - max).exp();
                    out[idx(r)] = e;
                    total += e;
                }
                for r in 0..len {
                    out[idx(r)] /= total;
                }
            }
        }
        let value = Tensor::new(sh, out)?;
        self.push("softmax", value, Op::Softmax(x, axis), &[x])
    }

    /// Normalises each last-axis row to zero mean and unit variance, then
    /// applies `gain` and `bias` (both of length `d`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        let d = *sh.last().ok_or(TensorError::InvalidAxis {
            op: "layer_norm",
            axis: 0,
            rank: 0,
        })?;
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: sh.clone(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gain).data(), self.value(bias).data());
        let rows = xv.len() / d;
        let mut normalized = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let n = (row[j] - mean) * is;
                normalized[r * d + j] = n;
                out[r * d + j] = n * gv[j] + bv[j];
            }
        }
        let value = Tensor::new(sh, out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// across fan-out and are read back with [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            } else if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(TensorError::NonFinite { op: "backward" });
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let out = nodes[idx].value.data();
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, contrib: Vec<f64>| accumulate(grads, v, contrib);
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.to_vec());
                }
                if wants(*b) {
                    acc(*b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, g.to_vec());
                }
                if wants(*b) {
                    acc(*b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect());
                }
                if wants(*b) {
                    acc(*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect());
                }
            }
            Op::AddBroadcast(x, b) => {
                if wants(*x) {
                    acc(*x, g.to_vec());
                }
                if wants(*b) {
                    let n = val(*b).len();
                    let mut db = vec![0.0; n];
                    for (i, gv) in g.iter().enumerate() {
                        db[i % n] += gv;
                    }
                    acc(*b, db);
                }
            }
            Op::MulBroadcast(x, b) => {
                let (xv, bv) = (val(*x), val(*b));
                let n = bv.len();
                if wants(*x) {
                    acc(*x, g.iter().enumerate().map(|(i, gv)| gv * bv[i % n]).collect());
                }
                if wants(*b) {
                    let mut db = vec![0.0; n];
                    for (i, gv) in g.iter().enumerate() {
                        db[i % n] += gv * xv[i];
                    }
                    acc(*b, db);
                }
            }
            Op::ScaleRows(x, s) => {
                let (xv, sv) = (val(*x), val(*s));
                let d = xv.len() / sv.len();
                if wants(*x) {
                    acc(*x, g.iter().enumerate().map(|(i, gv)| gv * sv[i / d]).collect());
                }
                if wants(*s) {
                    let ds = (0..sv.len())
                        .map(|r| (r * d..(r + 1) * d).map(|i| g[i] * xv[i]).sum())
                        .collect();
                    acc(*s, ds);
                }
            }
            Op::Scale(x, c) => acc(*x, g.iter().map(|v| v * c).collect()),
            Op::AddScalar(x) | Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::Exp(x) => acc(*x, g.iter().zip(out).map(|(g, y)| g * y).collect()),
            Op::Log(x) => acc(*x, g.iter().zip(val(*x)).map(|(g, x)| g / x).collect()),
            Op::Sigmoid(x) => acc(*x, g.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Tanh(x) => acc(*x, g.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Relu(x) => acc(
                *x,
                g.iter()
                    .zip(val(*x))
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect(),
            ),
            Op::Powf(x, e) => acc(
                *x,
                g.iter().zip(val(*x)).map(|(g, x)| g * e * x.powf(e - 1.0)).collect(),
            ),
            Op::Clamp(x, lo, hi) => acc(
                *x,
                g.iter()
                    .zip(val(*x))
                    .map(|(g, x)| if *x >= *lo && *x <= *hi { *g } else { 0.0 })
                    .collect(),
            ),
            Op::MatMul(a, b) => {
                let (ash, bsh) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (av, bv) = (val(*a), val(*b));
                let k = ash[ash.len() - 1];
                let n = bsh[bsh.len() - 1];
                if bsh.len() == 2 {
                    let m = av.len() / k;
                    if wants(*a) {
                        accumulate_with(grads, *a, m * k, |da, add| gemm(m, n, k, g, false, bv, true, da, add));
                    }
                    if wants(*b) {
                        accumulate_with(grads, *b, k * n, |db, add| gemm(k, m, n, av, true, g, false, db, add));
                    }
                } else {
                    let (batch, m) = (ash[0], ash[1]);
                    if wants(*a) {
                        accumulate_with(grads, *a, batch * m * k, |da, add| {
                            for i in 0..batch {
                                gemm(
                                    m,
                                    n,
                                    k,
                                    &g[i * m * n..(i + 1) * m * n],
                                    false,
                                    &bv[i * k * n..(i + 1) * k * n],
                                    true,
                                    &mut da[i * m * k..(i + 1) * m * k],
                                    add,
                                );
                            }
                        });
                    }
                    if wants(*b) {
                        accumulate_with(grads, *b, batch * k * n, |db, add| {
                            for i in 0..batch {
                                gemm(
                                    k,
                                    m,
                                    n,
                                    &av[i * m * k..(i + 1) * m * k],
                                    true,
                                    &g[i * m * n..(i + 1) * m * n],
                                    false,
                                    &mut db[i * k * n..(i + 1) * k * n],
                                    add,
                                );
                            }
                        });
                    }
                }
            }
            Op::Transpose(x) => {
                let sh = nodes[idx].value.shape();
                let (r, c) = (sh[sh.len() - 2], sh[sh.len() - 1]);
                let mut dx = vec![0.0; g.len()];
                for (src, dst) in g.chunks(r * c).zip(dx.chunks_mut(r * c)) {
                    transpose_into(src, r, c, dst);
                }
                acc(*x, dx);
            }
            Op::Concat(parts, axis) => {
                let out_shape = nodes[idx].value.shape();
                let (outer, _, inner) = axis_extents(out_shape, *axis);
                let mut offset = 0;
                let total = out_shape[*axis] * inner;
                for &p in parts {
                    let chunk = nodes[p.0].value.shape()[*axis] * inner;
                    if wants(p) {
                        let mut dp = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            dp.extend_from_slice(&g[o * total + offset..o * total + offset + chunk]);
                        }
                        acc(p, dp);
                    }
                    offset += chunk;
                }
            }
            Op::Slice(x, axis, start) => {
                let xs = nodes[x.0].value.shape();
                let (outer, len, inner) = axis_extents(xs, *axis);
                let taken = nodes[idx].value.shape()[*axis];
                // added in place: slicing every timestep of a sequence would
                // otherwise allocate a full-size buffer per slice
                let dx = grads[x.0].get_or_insert_with(|| vec![0.0; outer * len * inner]);
                for o in 0..outer {
                    let base = o * len * inner + start * inner;
                    for (d, s) in dx[base..base + taken * inner]
                        .iter_mut()
                        .zip(&g[o * taken * inner..(o + 1) * taken * inner])
                    {
                        *d += s;
                    }
                }
            }
            Op::Expand(x, axis) => {
                let out_shape = nodes[idx].value.shape();
                let n = out_shape[*axis];
                let inner: usize = out_shape[axis + 1..].iter().product();
                let outer = g.len() / (n * inner);
                let mut dx = vec![0.0; outer * inner];
                for o in 0..outer {
                    for r in 0..n {
                        let src = &g[(o * n + r) * inner..(o * n + r + 1) * inner];
                        for (d, s) in dx[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Sum(x, axis) => {
                let (outer, len, inner) = axis_extents(nodes[x.0].value.shape(), *axis);
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for r in 0..len {
                        dx[(o * len + r) * inner..(o * len + r + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                acc(*x, dx);
            }
            Op::SumAll(x) => acc(*x, vec![g[0]; val(*x).len()]),
            Op::Softmax(x, axis) => {
                let (outer, len, inner) = axis_extents(nodes[idx].value.shape(), *axis);
                let mut dx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |r: usize| (o * len + r) * inner + i;
                        let dot: f64 = (0..len).map(|r| g[at(r)] * out[at(r)]).sum();
                        for r in 0..len {
                            dx[at(r)] = out[at(r)] * (g[at(r)] - dot);
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let gv = val(*gain);
                let d = gv.len();
                let rows = g.len() / d;
                if wants(*gain) {
                    let mut dg = vec![0.0; d];
                    for (i, gv) in g.iter().enumerate() {
                        dg[i % d] += gv * normalized[i];
                    }
                    acc(*gain, dg);
                }
                if wants(*bias) {
                    let mut db = vec![0.0; d];
                    for (i, gv) in g.iter().enumerate() {
                        db[i % d] += gv;
                    }
                    acc(*bias, db);
                }
                if wants(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let span = r * d..(r + 1) * d;
                        let dn: Vec<f64> = g[span.clone()].iter().zip(gv).map(|(g, w)| g * w).collect();
                        let nrm = &normalized[span.clone()];
                        let mean_dn = dn.iter().sum::<f64>() / d as f64;
                        let mean_dn_n = dn.iter().zip(nrm).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            dx[r * d + j] = inv_std[r] * (dn[j] - mean_dn - nrm[j] * mean_dn_n);
                        }
                    }
                    acc(*x, dx);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(&contrib) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

/// Lets `write` add straight into an existing gradient buffer (`add =
/// true`) or fill a fresh one.
fn accumulate_with(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, write: impl FnOnce(&mut [f64], bool)) {
    match &mut grads[v.0] {
        Some(existing) => write(existing, true),
        slot @ None => {
            let mut fresh = vec![0.0; len];
            write(&mut fresh, false);
            *slot = Some(fresh);
        }
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

fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// `c = op(a) · op(b)` (or `c +=` when `accumulate`), with `op(a)` of shape
/// `m×k` and `op(b)` of shape `k×n`. A transposed operand is stored in the
/// other orientation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee every strided access stays within
    // the three slices, and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
