//! The network's building blocks. Each block owns its parameter tensors and
//! can [`bind`](TvdBlock::bind) them into a [`Graph`], yielding a handle whose
//! `forward` records the block's computation on that tape.
//!
//! Affine maps act on row vectors: `x·W + b` with `W` stored `[in×out]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::numerics::{glorot_uniform, Arithmetic, Graph, Tensor, Var};

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Draws `vars` in the order produced by a block's `parameters()`.
pub(crate) struct VarStream<I: Iterator<Item = Var>>(pub(crate) I);

impl<I: Iterator<Item = Var>> VarStream<I> {
    pub(crate) fn next(&mut self) -> Var {
        self.0.next().expect("one bound var per parameter")
    }
}

fn bind_all(g: &mut Graph, params: &[&Tensor]) -> std::vec::IntoIter<Var> {
    params
        .iter()
        .map(|t| g.param(t))
        .collect::<Vec<_>>()
        .into_iter()
}

/// Parallel same-padded convolutions over several odd kernel sizes, averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InceptionBlock {
    pub kernel_sizes: Vec<usize>,
    /// One `[C_branch×C_in×s×s]` tensor per kernel size.
    pub kernels: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct BoundInception {
    kernels: Vec<Var>,
}

impl InceptionBlock {
    pub fn new(
        c_in: usize,
        c_branch: usize,
        kernel_sizes: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if kernel_sizes.is_empty() {
            bail!(Config, "an inception block needs at least one kernel size");
        }
        if let Some(s) = kernel_sizes.iter().find(|&&s| s % 2 == 0) {
            bail!(Config, "inception kernel sizes must be odd, got {s}");
        }
        if c_in == 0 || c_branch == 0 {
            bail!(Config, "inception channel counts must be positive");
        }
        let kernels = kernel_sizes
            .iter()
            .map(|&s| glorot_uniform(&[c_branch, c_in, s, s], c_in * s * s, c_branch * s * s, rng))
            .collect();
        Ok(Self {
            kernel_sizes: kernel_sizes.to_vec(),
            kernels,
        })
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.kernels.iter().collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.kernels.iter_mut().collect()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.kernel_sizes.iter().map(|s| format!("k{s}")).collect()
    }

    pub fn bind(&self, g: &mut Graph) -> BoundInception {
        Self::bind_from(
            self.kernels.len(),
            &mut VarStream(bind_all(g, &self.parameters())),
        )
    }

    pub(crate) fn bind_from<I: Iterator<Item = Var>>(
        n: usize,
        vars: &mut VarStream<I>,
    ) -> BoundInception {
        BoundInception {
            kernels: (0..n).map(|_| vars.next()).collect(),
        }
    }

    /// `x2d`: `[C_in×p×f]` → `[C_branch×p×f]`.
    pub fn forward(&self, x2d: &Tensor, arithmetic: Arithmetic) -> Result<Tensor> {
        let mut g = Graph::new(arithmetic);
        let b = self.bind(&mut g);
        let x = g.constant(x2d.clone());
        let y = b.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }
}

impl BoundInception {
    pub fn parameters(&self) -> Vec<Var> {
        self.kernels.clone()
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut acc = g.conv2d(x, self.kernels[0])?;
        for &k in &self.kernels[1..] {
            let y = g.conv2d(x, k)?;
            acc = g.add(acc, y)?;
        }
        if self.kernels.len() == 1 {
            return Ok(acc);
        }
        g.scale(acc, 1.0 / self.kernels.len() as f64)
    }
}

/// Gated residual denoising block, applied position-wise over the last axis:
///
/// ```text
/// η₂  = ELU(x·W₂ + b₂)
/// η₁  = η₂·W₁ + b₁
/// out = LayerNorm(x + σ(η₁·W₃ + b₃) ⊙ (η₁·W₄ + b₄))
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvdBlock {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
    pub w4: Tensor,
    pub b4: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct BoundTvd {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    w3: Var,
    b3: Var,
    w4: Var,
    b4: Var,
    ln_gain: Var,
    ln_bias: Var,
}

pub(crate) const TVD_PARAM_NAMES: [&str; 10] = [
    "w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "ln_gain", "ln_bias",
];

impl TvdBlock {
    pub fn new(d_model: usize, rng: &mut impl Rng) -> Result<Self> {
        if d_model == 0 {
            bail!(Config, "d_model must be positive");
        }
        let mut w = || glorot_uniform(&[d_model, d_model], d_model, d_model, rng);
        let (w1, w2, w3, w4) = (w(), w(), w(), w());
        let zeros = || Tensor::zeros(&[d_model]).with_requires_grad(true);
        Ok(Self {
            w1,
            b1: zeros(),
            w2,
            b2: zeros(),
            w3,
            b3: zeros(),
            w4,
            b4: zeros(),
            ln_gain: Tensor::filled(&[d_model], 1.0).with_requires_grad(true),
            ln_bias: zeros(),
        })
    }

    pub fn d_model(&self) -> usize {
        self.b1.len()
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        vec![
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.w3,
            &self.b3,
            &self.w4,
            &self.b4,
            &self.ln_gain,
            &self.ln_bias,
        ]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
            &mut self.w4,
            &mut self.b4,
            &mut self.ln_gain,
            &mut self.ln_bias,
        ]
    }

    pub fn bind(&self, g: &mut Graph) -> BoundTvd {
        Self::bind_from(&mut VarStream(bind_all(g, &self.parameters())))
    }

    pub(crate) fn bind_from<I: Iterator<Item = Var>>(vars: &mut VarStream<I>) -> BoundTvd {
        BoundTvd {
            w1: vars.next(),
            b1: vars.next(),
            w2: vars.next(),
            b2: vars.next(),
            w3: vars.next(),
            b3: vars.next(),
            w4: vars.next(),
            b4: vars.next(),
            ln_gain: vars.next(),
            ln_bias: vars.next(),
        }
    }

    /// `x`: `[P×d_model]`.
    pub fn forward(&self, x: &Tensor, arithmetic: Arithmetic) -> Result<Tensor> {
        let mut g = Graph::new(arithmetic);
        let b = self.bind(&mut g);
        let x = g.constant(x.clone());
        let y = b.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }
}

impl BoundTvd {
    pub fn parameters(&self) -> Vec<Var> {
        vec![
            self.w1,
            self.b1,
            self.w2,
            self.b2,
            self.w3,
            self.b3,
            self.w4,
            self.b4,
            self.ln_gain,
            self.ln_bias,
        ]
    }

    fn affine(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let d = g.value(self.b1).len();
        match g.value(x).shape() {
            [_, last] if *last == d => {}
            s => bail!(Dimension, "TVD expects [P×{d}] input, got {s:?}"),
        }
        let pre = Self::affine(g, x, self.w2, self.b2)?;
        let eta2 = g.elu(pre)?;
        let eta1 = Self::affine(g, eta2, self.w1, self.b1)?;
        let gate_in = Self::affine(g, eta1, self.w3, self.b3)?;
        let gate = g.sigmoid(gate_in)?;
        let value = Self::affine(g, eta1, self.w4, self.b4)?;
        let glu = g.mul(gate, value)?;
        let res = g.add(x, glu)?;
        g.layer_norm(res, self.ln_gain, self.ln_bias, LAYER_NORM_EPS)
    }
}

/// Mean over both spatial axes: `[C×p×f]` → `[C]`.
pub fn pool_branch(x2d: &Tensor) -> Result<Tensor> {
    let [c, p, f] = *x2d.shape() else {
        bail!(
            Dimension,
            "pool_branch expects [C×p×f], got {:?}",
            x2d.shape()
        );
    };
    let hw = (p * f) as f64;
    let out = x2d
        .data()
        .chunks(p * f)
        .map(|plane| plane.iter().sum::<f64>() / hw)
        .collect();
    Tensor::new(&[c], out)
}

/// How attention scores are scaled before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// Divide by `d_attn`.
    #[default]
    Linear,
    /// Divide by `√d_attn`.
    Sqrt,
}

impl AttentionScale {
    pub fn divisor(self, d_attn: usize) -> f64 {
        match self {
            AttentionScale::Linear => d_attn as f64,
            AttentionScale::Sqrt => (d_attn as f64).sqrt(),
        }
    }
}

impl std::str::FromStr for AttentionScale {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "sqrt" => Ok(Self::Sqrt),
            other => bail!(
                Config,
                "unknown attention scale '{other}' (expected linear or sqrt)"
            ),
        }
    }
}

/// Multi-head attention across the `k` period branches, followed by an
/// output projection and a mean over branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MafBlock {
    pub heads: usize,
    /// Per head, `[d_model×d_head]`.
    pub wq: Vec<Tensor>,
    pub wk: Vec<Tensor>,
    pub wv: Vec<Tensor>,
    /// `[heads·d_head × d_model]`.
    pub w_out: Tensor,
    pub scale: AttentionScale,
}

#[derive(Debug, Clone)]
pub struct BoundMaf {
    wq: Vec<Var>,
    wk: Vec<Var>,
    wv: Vec<Var>,
    w_out: Var,
    divisor: f64,
}

impl MafBlock {
    pub fn new(
        d_model: usize,
        heads: usize,
        scale: AttentionScale,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || d_model == 0 || !d_model.is_multiple_of(heads) {
            bail!(
                Config,
                "d_model ({d_model}) must be a positive multiple of heads ({heads})"
            );
        }
        let dh = d_model / heads;
        let mut proj = || -> Vec<Tensor> {
            (0..heads)
                .map(|_| glorot_uniform(&[d_model, dh], d_model, dh, rng))
                .collect()
        };
        let (wq, wk, wv) = (proj(), proj(), proj());
        Ok(Self {
            heads,
            wq,
            wk,
            wv,
            w_out: glorot_uniform(&[d_model, d_model], d_model, d_model, rng),
            scale,
        })
    }

    pub fn d_head(&self) -> usize {
        self.wq[0].shape()[1]
    }

    /// Scores are divided by this; `d_attn` equals `d_head`.
    pub fn divisor(&self) -> f64 {
        self.scale.divisor(self.d_head())
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(3 * self.heads + 1);
        for h in 0..self.heads {
            out.extend([&self.wq[h], &self.wk[h], &self.wv[h]]);
        }
        out.push(&self.w_out);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(3 * self.heads + 1);
        for ((q, k), v) in self.wq.iter_mut().zip(&mut self.wk).zip(&mut self.wv) {
            out.extend([q, k, v]);
        }
        out.push(&mut self.w_out);
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.heads)
            .flat_map(|h| ["wq", "wk", "wv"].map(|p| format!("head{h}.{p}")))
            .collect();
        out.push("w_out".into());
        out
    }

    pub fn bind(&self, g: &mut Graph) -> BoundMaf {
        self.bind_from(&mut VarStream(bind_all(g, &self.parameters())))
    }

    pub(crate) fn bind_from<I: Iterator<Item = Var>>(&self, vars: &mut VarStream<I>) -> BoundMaf {
        let (mut wq, mut wk, mut wv) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..self.heads {
            wq.push(vars.next());
            wk.push(vars.next());
            wv.push(vars.next());
        }
        BoundMaf {
            wq,
            wk,
            wv,
            w_out: vars.next(),
            divisor: self.divisor(),
        }
    }

    /// `branches`: `[k×d_model]` → fused `[d_model]`.
    pub fn forward(&self, branches: &Tensor, arithmetic: Arithmetic) -> Result<Tensor> {
        Ok(self.forward_with_attention(branches, arithmetic)?.0)
    }

    /// Fused vector plus each head's `[k×k]` attention matrix.
    pub fn forward_with_attention(
        &self,
        branches: &Tensor,
        arithmetic: Arithmetic,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let mut g = Graph::new(arithmetic);
        let b = self.bind(&mut g);
        let x = g.constant(branches.clone());
        let (y, attn) = b.forward_with_attention(&mut g, x)?;
        let d = g.value(y).len();
        let fused = g.value(y).reshaped(&[d])?;
        Ok((
            fused,
            attn.into_iter().map(|a| g.value(a).clone()).collect(),
        ))
    }
}

impl BoundMaf {
    pub fn parameters(&self) -> Vec<Var> {
        let mut out = Vec::with_capacity(3 * self.wq.len() + 1);
        for h in 0..self.wq.len() {
            out.extend([self.wq[h], self.wk[h], self.wv[h]]);
        }
        out.push(self.w_out);
        out
    }

    /// `x`: `[k×d_model]` → `[1×d_model]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        Ok(self.forward_with_attention(g, x)?.0)
    }

    pub fn forward_with_attention(&self, g: &mut Graph, x: Var) -> Result<(Var, Vec<Var>)> {
        let mut heads = Vec::with_capacity(self.wq.len());
        let mut attn = Vec::with_capacity(self.wq.len());
        for h in 0..self.wq.len() {
            let q = g.matmul(x, self.wq[h])?;
            let k = g.matmul(x, self.wk[h])?;
            let v = g.matmul(x, self.wv[h])?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let scaled = g.scale(scores, 1.0 / self.divisor)?;
            let a = g.softmax(scaled, 1)?;
            heads.push(g.matmul(a, v)?);
            attn.push(a);
        }
        let z = g.concat_cols(&heads)?;
        let h = g.matmul(z, self.w_out)?;
        Ok((g.mean_rows(h)?, attn))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const D: Arithmetic = Arithmetic::Double;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn random(shape: &[usize], r: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn inception_identity_and_zero_kernels() {
        let mut r = rng();
        let mut block = InceptionBlock::new(2, 2, &[1, 3, 5], &mut r).unwrap();
        for k in &mut block.kernels {
            let s = k.shape()[2];
            let mut id = vec![0.0; k.len()];
            for c in 0..2 {
                id[((c * 2 + c) * s + s / 2) * s + s / 2] = 1.0;
            }
            *k = Tensor::new(k.shape(), id).unwrap();
        }
        let x = random(&[2, 3, 4], &mut r);
        assert!(block.forward(&x, D).unwrap().max_abs_diff(&x) < 1e-15);
        for k in &mut block.kernels {
            *k = Tensor::zeros(k.shape());
        }
        assert!(block
            .forward(&x, D)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(InceptionBlock::new(2, 2, &[2], &mut r).is_err());
    }

    #[test]
    fn tvd_with_zero_value_branch_is_layer_norm() {
        let mut r = rng();
        let mut block = TvdBlock::new(4, &mut r).unwrap();
        block.w4 = Tensor::zeros(&[4, 4]);
        let x = random(&[3, 4], &mut r);
        let y = block.forward(&x, D).unwrap();
        for (row_x, row_y) in x.data().chunks(4).zip(y.data().chunks(4)) {
            let mean = row_x.iter().sum::<f64>() / 4.0;
            let var = row_x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            for (a, b) in row_x.iter().zip(row_y) {
                assert_eq!(*b, (a - mean) * (1.0 / (var + LAYER_NORM_EPS).sqrt()));
            }
        }
    }

    #[test]
    fn tvd_with_zero_gate_halves_value() {
        let mut r = rng();
        let mut block = TvdBlock::new(4, &mut r).unwrap();
        block.w3 = Tensor::zeros(&[4, 4]);
        block.b4 = random(&[4], &mut r);
        let x = random(&[2, 4], &mut r);
        let y = block.forward(&x, D).unwrap();

        let mut shifted = x.clone();
        for (i, row) in x.data().chunks(4).enumerate() {
            let eta2: Vec<f64> = (0..4)
                .map(|j| {
                    crate::numerics::elu((0..4).map(|i| row[i] * block.w2.at(&[i, j])).sum::<f64>())
                })
                .collect();
            let eta1: Vec<f64> = (0..4)
                .map(|j| (0..4).map(|i| eta2[i] * block.w1.at(&[i, j])).sum())
                .collect();
            for j in 0..4 {
                let v: f64 = (0..4).map(|i| eta1[i] * block.w4.at(&[i, j])).sum::<f64>()
                    + block.b4.data()[j];
                shifted.data_mut()[i * 4 + j] += 0.5 * v;
            }
        }
        let mut zero_value = block.clone();
        zero_value.w4 = Tensor::zeros(&[4, 4]);
        zero_value.b4 = Tensor::zeros(&[4]);
        let expected = zero_value.forward(&shifted, D).unwrap();
        assert!(y.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn tvd_checks_width() {
        let block = TvdBlock::new(4, &mut rng()).unwrap();
        assert!(matches!(
            block.forward(&Tensor::zeros(&[2, 3]), D),
            Err(crate::Error::Dimension(_))
        ));
    }

    #[test]
    fn pooling_cases() {
        let c = Tensor::filled(&[3, 2, 5], 0.25);
        assert_eq!(pool_branch(&c).unwrap().data(), &[0.25; 3]);
        let single = Tensor::new(&[3, 1, 1], vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(pool_branch(&single).unwrap().data(), single.data());
    }

    #[test]
    fn maf_single_branch_is_projection_of_value() {
        let mut r = rng();
        let maf = MafBlock::new(4, 2, AttentionScale::Linear, &mut r).unwrap();
        let x = random(&[1, 4], &mut r);
        let (y, attn) = maf.forward_with_attention(&x, D).unwrap();
        assert!(attn.iter().all(|a| a.data() == [1.0]));
        let mut z = Vec::new();
        for h in 0..2 {
            for j in 0..2 {
                z.push(
                    (0..4)
                        .map(|i| x.data()[i] * maf.wv[h].at(&[i, j]))
                        .sum::<f64>(),
                );
            }
        }
        for j in 0..4 {
            let e: f64 = (0..4).map(|i| z[i] * maf.w_out.at(&[i, j])).sum();
            assert!((y.data()[j] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn maf_zero_queries_attend_uniformly() {
        let mut r = rng();
        let mut maf = MafBlock::new(4, 2, AttentionScale::Linear, &mut r).unwrap();
        for q in &mut maf.wq {
            *q = Tensor::zeros(q.shape());
        }
        let x = random(&[3, 4], &mut r);
        let (_, attn) = maf.forward_with_attention(&x, D).unwrap();
        for a in attn {
            assert!(a.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn maf_rejects_indivisible_heads() {
        assert!(MafBlock::new(6, 4, AttentionScale::Linear, &mut rng()).is_err());
    }
}
