//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its output value and enough saved state to
//! produce vector-Jacobian products. `backward` walks the tape once in reverse.
//! Ops are coarse (matmul, conv2d, layer_norm, ...) so the tape stays short and
//! the hot loops live in plain slices.

use super::precision::Arithmetic;
use super::tensor::Tensor;
use crate::error::{bail, Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(index: usize) -> Self {
        Var(index)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    AddChannelBias(Var, Var),
    Elu(Var),
    Sigmoid(Var),
    Softmax {
        input: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        input: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Conv2d {
        input: Var,
        kernels: Var,
    },
    Transpose(Var),
    Reshape(Var),
    MeanRows(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-writer tape of differentiable operations.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    arithmetic: Arithmetic,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `var`, or zeros of length `len` when nothing reached it.
    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.get(var)
            .map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new(Arithmetic::Double)
    }
}

impl Graph {
    pub fn new(arithmetic: Arithmetic) -> Self {
        Self {
            nodes: Vec::new(),
            arithmetic,
        }
    }

    pub fn arithmetic(&self) -> Arithmetic {
        self.arithmetic
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

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a tensor as a leaf. It participates in differentiation iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        let mut value = Tensor::from_parts(tensor.shape().to_vec(), tensor.data().to_vec());
        self.arithmetic.round_slice(value.data_mut());
        let needs_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a differentiable leaf regardless of the tensor's flag.
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        let v = self.leaf(tensor);
        self.nodes[v.0].needs_grad = true;
        v
    }

    /// Registers a non-differentiable leaf.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let mut value = tensor;
        value.set_requires_grad(false);
        value.clear_grad();
        self.arithmetic.round_slice(value.data_mut());
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        mut data: Vec<f64>,
        op: Op,
        needs_grad: bool,
    ) -> Result<Var> {
        self.arithmetic.round_slice(&mut data);
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            bail!(
                Numeric,
                "{name} produced non-finite value {} at index {i}",
                data[i]
            );
        }
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, data),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rank2(&self, v: Var, op: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => bail!(Dimension, "{op} expects a rank-2 tensor, got shape {s:?}"),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.rank2(a, "matmul")?;
        let (n2, p) = self.rank2(b, "matmul")?;
        if n != n2 {
            bail!(
                Dimension,
                "matmul inner dimensions differ: [{m}x{n}] x [{n2}x{p}]"
            );
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let row = &mut out[i * p..(i + 1) * p];
            for k in 0..n {
                let aik = ad[i * n + k];
                for (o, &bkj) in row.iter_mut().zip(&bd[k * p..(k + 1) * p]) {
                    *o += aik * bkj;
                }
            }
        }
        let ng = self.needs(a) || self.needs(b);
        self.push("matmul", vec![m, p], out, Op::MatMul(a, b), ng)
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            bail!(
                Dimension,
                "{op} shape mismatch: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            );
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        let ng = self.needs(a) || self.needs(b);
        self.push("add", self.shape(a).to_vec(), out, Op::Add(a, b), ng)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        let ng = self.needs(a) || self.needs(b);
        self.push("mul", self.shape(a).to_vec(), out, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.data(a).iter().map(|x| x * factor).collect();
        let ng = self.needs(a);
        self.push(
            "scale",
            self.shape(a).to_vec(),
            out,
            Op::Scale(a, factor),
            ng,
        )
    }

    /// Adds `bias` (length = last axis) to every slice along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let last = *self.shape(x).last().expect("tensors have rank >= 1");
        if self.value(bias).len() != last {
            bail!(
                Dimension,
                "bias of length {} does not match last axis {last}",
                self.value(bias).len()
            );
        }
        let bd = self.data(bias);
        let out = self
            .data(x)
            .chunks(last)
            .flat_map(|row| row.iter().zip(bd).map(|(v, b)| v + b))
            .collect();
        let ng = self.needs(x) || self.needs(bias);
        self.push(
            "add_bias",
            self.shape(x).to_vec(),
            out,
            Op::AddBias(x, bias),
            ng,
        )
    }

    /// Adds one bias per channel to a channel-first `[C×H×W]` map.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (c, hw) = match self.shape(x) {
            [c, h, w] => (*c, h * w),
            s => bail!(Dimension, "add_channel_bias expects [C×H×W], got {s:?}"),
        };
        if self.value(bias).len() != c {
            bail!(
                Dimension,
                "channel bias length {} != {c}",
                self.value(bias).len()
            );
        }
        let bd = self.data(bias);
        let out = self
            .data(x)
            .chunks(hw)
            .zip(bd)
            .flat_map(|(plane, b)| plane.iter().map(move |v| v + b))
            .collect();
        let ng = self.needs(x) || self.needs(bias);
        self.push(
            "add_channel_bias",
            self.shape(x).to_vec(),
            out,
            Op::AddChannelBias(x, bias),
            ng,
        )
    }

    /// Exponential linear unit with α = 1.
    pub fn elu(&mut self, x: Var) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| elu(v)).collect();
        let ng = self.needs(x);
        self.push("elu", self.shape(x).to_vec(), out, Op::Elu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| sigmoid(v)).collect();
        let ng = self.needs(x);
        self.push("sigmoid", self.shape(x).to_vec(), out, Op::Sigmoid(x), ng)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            bail!(
                Dimension,
                "softmax axis {axis} out of range for shape {shape:?}"
            );
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.data(x);
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let idx = |j: usize| base + j * inner;
                let max = (0..len)
                    .map(|j| xd[idx(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (xd[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        let ng = self.needs(x);
        self.push(
            "softmax",
            shape,
            out,
            Op::Softmax {
                input: x,
                outer,
                len,
                inner,
            },
            ng,
        )
    }

    /// Normalizes each slice along the last axis to zero mean and unit
    /// variance, then applies `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, epsilon: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().expect("tensors have rank >= 1");
        if n == 0 {
            bail!(Dimension, "layer_norm over a zero-length axis");
        }
        if self.value(gain).len() != n || self.value(bias).len() != n {
            bail!(
                Dimension,
                "layer_norm gain/bias must have length {n}, got {} and {}",
                self.value(gain).len(),
                self.value(bias).len()
            );
        }
        let (xd, gd, bd) = (self.data(x), self.data(gain), self.data(bias));
        let rows = xd.len() / n;
        let mut normalized = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let slice = &xd[r * n..(r + 1) * n];
            let mean = slice.iter().sum::<f64>() / n as f64;
            let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + epsilon).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let xh = (slice[j] - mean) * inv;
                normalized[r * n + j] = xh;
                out[r * n + j] = gd[j] * xh + bd[j];
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(
            "layer_norm",
            shape,
            out,
            Op::LayerNorm {
                input: x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            ng,
        )
    }

    /// Same-padded 2D cross-correlation of a `[C_in×H×W]` map with
    /// `[C_out×C_in×kh×kw]` kernels. Kernel extents must be odd.
    pub fn conv2d(&mut self, input: Var, kernels: Var) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(input), self.shape(kernels))?;
        let mut out = vec![0.0; geom.c_out * geom.h * geom.w];
        geom.for_each_tap(|co, ci, tap, span| {
            let wv = self.data(kernels)[tap];
            let inp = self.data(input);
            for (o_start, i_start, len) in span.rows() {
                let o = &mut out[co * geom.hw() + o_start..][..len];
                let i = &inp[ci * geom.hw() + i_start..][..len];
                for (a, b) in o.iter_mut().zip(i) {
                    *a += wv * b;
                }
            }
        });
        let ng = self.needs(input) || self.needs(kernels);
        self.push(
            "conv2d",
            vec![geom.c_out, geom.h, geom.w],
            out,
            Op::Conv2d { input, kernels },
            ng,
        )
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.rank2(x, "transpose")?;
        let xd = self.data(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xd[i * n + j];
            }
        }
        let ng = self.needs(x);
        self.push("transpose", vec![n, m], out, Op::Transpose(x), ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() || shape.contains(&0) {
            bail!(
                Dimension,
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            );
        }
        let out = self.data(x).to_vec();
        let ng = self.needs(x);
        self.push("reshape", shape.to_vec(), out, Op::Reshape(x), ng)
    }

    /// `[m×n] → [1×n]` column means.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.rank2(x, "mean_rows")?;
        let xd = self.data(x);
        let mut out = vec![0.0; n];
        for row in xd.chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let ng = self.needs(x);
        self.push("mean_rows", vec![1, n], out, Op::MeanRows(x), ng)
    }

    /// Stacks rank-2 tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            bail!(Dimension, "concat_rows of nothing");
        }
        let (_, n) = self.rank2(parts[0], "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.rank2(p, "concat_rows")?;
            if c != n {
                bail!(Dimension, "concat_rows column mismatch: {c} vs {n}");
            }
            rows += r;
            out.extend_from_slice(self.data(p));
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(
            "concat_rows",
            vec![rows, n],
            out,
            Op::ConcatRows(parts.to_vec()),
            ng,
        )
    }

    /// Joins rank-2 tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            bail!(Dimension, "concat_cols of nothing");
        }
        let (m, _) = self.rank2(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.rank2(p, "concat_cols")?;
            if r != m {
                bail!(Dimension, "concat_cols row mismatch: {r} vs {m}");
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[i * w..(i + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(
            "concat_cols",
            vec![m, total],
            out,
            Op::ConcatCols(parts.to_vec()),
            ng,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum();
        let ng = self.needs(x);
        self.push("sum", vec![1], vec![s], Op::Sum(x), ng)
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `[B×n]` logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, n) = self.rank2(logits, "cross_entropy")?;
        if labels.len() != b {
            bail!(Dimension, "{} labels for a batch of {b}", labels.len());
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            bail!(Data, "label {bad} out of range for {n} classes");
        }
        let ld = self.data(logits);
        let mut probs = vec![0.0; b * n];
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &ld[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_total = total.ln();
            for j in 0..n {
                probs[r * n + j] = (row[j] - max - log_total).exp();
            }
            loss -= row[label] - max - log_total;
        }
        loss /= b as f64;
        let ng = self.needs(logits);
        self.push(
            "cross_entropy",
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            bail!(
                Dimension,
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            );
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            self.arithmetic.round_slice(&mut g);
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if let Some(g) = g {
                self.arithmetic.round_slice(g);
                if !node.needs_grad {
                    continue;
                }
                if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                    bail!(Numeric, "non-finite gradient {} at index {i}", g[i]);
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<()> {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let p = self.shape(*b)[1];
                let (ad, bd) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        let grow = &g[i * p..(i + 1) * p];
                        for k in 0..n {
                            let brow = &bd[k * p..(k + 1) * p];
                            ga[i * n + k] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..m {
                        let grow = &g[i * p..(i + 1) * p];
                        for k in 0..n {
                            let aik = ad[i * n + k];
                            for (o, &gv) in gb[k * p..(k + 1) * p].iter_mut().zip(grow) {
                                *o += aik * gv;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    acc(*v, &mut |ga| add_into(ga, g));
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| {
                    for ((o, gv), bv) in ga.iter_mut().zip(g).zip(bd) {
                        *o += gv * bv;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, gv), av) in gb.iter_mut().zip(g).zip(ad) {
                        *o += gv * av;
                    }
                });
            }
            Op::Scale(a, factor) => acc(*a, &mut |ga| {
                for (o, gv) in ga.iter_mut().zip(g) {
                    *o += gv * factor;
                }
            }),
            Op::AddBias(x, bias) => {
                acc(*x, &mut |gx| add_into(gx, g));
                let n = self.value(*bias).len();
                acc(*bias, &mut |gb| {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                });
            }
            Op::AddChannelBias(x, bias) => {
                acc(*x, &mut |gx| add_into(gx, g));
                let c = self.value(*bias).len();
                let hw = g.len() / c;
                acc(*bias, &mut |gb| {
                    for (o, plane) in gb.iter_mut().zip(g.chunks(hw)) {
                        *o += plane.iter().sum::<f64>();
                    }
                });
            }
            Op::Elu(x) => {
                let yd = out.data();
                acc(*x, &mut |gx| {
                    for ((o, gv), &y) in gx.iter_mut().zip(g).zip(yd) {
                        // y > 0 iff x > 0; otherwise dy/dx = e^x = y + 1.
                        let d = if y > 0.0 { 1.0 } else { y + 1.0 };
                        *o += gv * d;
                    }
                });
            }
            Op::Sigmoid(x) => {
                let yd = out.data();
                acc(*x, &mut |gx| {
                    for ((o, gv), &y) in gx.iter_mut().zip(g).zip(yd) {
                        *o += gv * y * (1.0 - y);
                    }
                });
            }
            Op::Softmax {
                input,
                outer,
                len,
                inner,
            } => {
                let yd = out.data();
                let (outer, len, inner) = (*outer, *len, *inner);
                acc(*input, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let dot: f64 = (0..len)
                                .map(|j| g[base + j * inner] * yd[base + j * inner])
                                .sum();
                            for j in 0..len {
                                let k = base + j * inner;
                                gx[k] += yd[k] * (g[k] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let n = self.value(*gain).len();
                let gd = self.data(*gain);
                acc(*gain, &mut |gg| {
                    for (grow, xrow) in g.chunks(n).zip(normalized.chunks(n)) {
                        for ((o, gv), xh) in gg.iter_mut().zip(grow).zip(xrow) {
                            *o += gv * xh;
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for grow in g.chunks(n) {
                        add_into(gb, grow);
                    }
                });
                acc(*input, &mut |gx| {
                    let nf = n as f64;
                    for (r, (grow, xrow)) in g.chunks(n).zip(normalized.chunks(n)).enumerate() {
                        let mut sum_gh = 0.0;
                        let mut sum_ghx = 0.0;
                        for j in 0..n {
                            let gh = grow[j] * gd[j];
                            sum_gh += gh;
                            sum_ghx += gh * xrow[j];
                        }
                        let scale = inv_std[r] / nf;
                        for j in 0..n {
                            let gh = grow[j] * gd[j];
                            gx[r * n + j] += scale * (nf * gh - sum_gh - xrow[j] * sum_ghx);
                        }
                    }
                });
            }
            Op::Conv2d { input, kernels } => {
                let geom = ConvGeometry::new(self.shape(*input), self.shape(*kernels))?;
                let hw = geom.hw();
                let (id, kd) = (self.data(*input), self.data(*kernels));
                acc(*input, &mut |gi| {
                    geom.for_each_tap(|co, ci, tap, span| {
                        let wv = kd[tap];
                        for (o_start, i_start, len) in span.rows() {
                            let src = &g[co * hw + o_start..][..len];
                            let dst = &mut gi[ci * hw + i_start..][..len];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    });
                });
                acc(*kernels, &mut |gk| {
                    geom.for_each_tap(|co, ci, tap, span| {
                        let mut total = 0.0;
                        for (o_start, i_start, len) in span.rows() {
                            let go = &g[co * hw + o_start..][..len];
                            let xi = &id[ci * hw + i_start..][..len];
                            total += go.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                        }
                        gk[tap] += total;
                    });
                });
            }
            Op::Transpose(x) => {
                let (m, n) = (self.shape(*x)[0], self.shape(*x)[1]);
                acc(*x, &mut |gx| {
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |gx| add_into(gx, g)),
            Op::MeanRows(x) => {
                let (m, n) = (self.shape(*x)[0], self.shape(*x)[1]);
                let inv = 1.0 / m as f64;
                acc(*x, &mut |gx| {
                    for row in gx.chunks_mut(n) {
                        for (o, gv) in row.iter_mut().zip(g) {
                            *o += gv * inv;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    acc(*p, &mut |gp| add_into(gp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let m = out.shape()[0];
                let total = out.shape()[1];
                let mut col = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    acc(*p, &mut |gp| {
                        for i in 0..m {
                            add_into(
                                &mut gp[i * w..(i + 1) * w],
                                &g[i * total + col..i * total + col + w],
                            );
                        }
                    });
                    col += w;
                }
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0])),
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = self.shape(*logits)[1];
                let scale = g[0] / labels.len() as f64;
                acc(*logits, &mut |gl| {
                    for (r, &label) in labels.iter().enumerate() {
                        for j in 0..n {
                            let onehot = if j == label { 1.0 } else { 0.0 };
                            gl[r * n + j] += scale * (probs[r * n + j] - onehot);
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct ConvGeometry {
    c_out: usize,
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
}

/// Valid overlap of one kernel tap with the input, as row-wise runs.
struct TapSpan {
    y0: usize,
    y1: usize,
    x0: usize,
    x1: usize,
    dy: isize,
    dx: isize,
    w: usize,
}

impl TapSpan {
    /// `(output offset, input offset, run length)` per output row.
    fn rows(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let len = self.x1.saturating_sub(self.x0);
        (self.y0..self.y1).filter(move |_| len > 0).map(move |y| {
            let iy = (y as isize + self.dy) as usize;
            let ix = (self.x0 as isize + self.dx) as usize;
            (y * self.w + self.x0, iy * self.w + ix, len)
        })
    }
}

impl ConvGeometry {
    fn new(input: &[usize], kernels: &[usize]) -> Result<Self> {
        let [c_in, h, w] = *input else {
            bail!(Dimension, "conv2d input must be [C×H×W], got {input:?}");
        };
        let [c_out, kc, kh, kw] = *kernels else {
            bail!(
                Dimension,
                "conv2d kernels must be [C_out×C_in×kh×kw], got {kernels:?}"
            );
        };
        if kc != c_in {
            bail!(
                Dimension,
                "conv2d kernel expects {kc} input channels, input has {c_in}"
            );
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Config(format!(
                "conv2d same padding needs odd kernel extents, got {kh}x{kw}"
            )));
        }
        Ok(Self {
            c_out,
            c_in,
            h,
            w,
            kh,
            kw,
        })
    }

    fn hw(&self) -> usize {
        self.h * self.w
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, &TapSpan)) {
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let (h, w) = (self.h as isize, self.w as isize);
        for co in 0..self.c_out {
            for ci in 0..self.c_in {
                for ky in 0..self.kh {
                    let dy = ky as isize - ph;
                    let y0 = (-dy).max(0).min(h) as usize;
                    let y1 = (h - dy).min(h).max(0) as usize;
                    for kx in 0..self.kw {
                        let dx = kx as isize - pw;
                        let span = TapSpan {
                            y0,
                            y1,
                            x0: (-dx).max(0).min(w) as usize,
                            x1: (w - dx).min(w).max(0) as usize,
                            dy,
                            dx,
                            w: self.w,
                        };
                        let tap = ((co * self.c_in + ci) * self.kh + ky) * self.kw + kx;
                        f(co, ci, tap, &span);
                    }
                }
            }
        }
    }
}
