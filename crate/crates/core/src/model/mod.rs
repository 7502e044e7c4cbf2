//! The period-decomposition classifier.
//!
//! Per sensor, a `[T×C]` signal is decomposed into its `k` strongest periods.
//! Each period folds the signal into a `[C×p×f]` map, which passes through a
//! 1×1 embedding convolution (C → d_model), an [`InceptionBlock`], `L`
//! [`TvdBlock`]s acting on every spatial site's d_model vector, and global
//! average pooling. The `k` pooled vectors are fused by a [`MafBlock`] (or,
//! with attention disabled, by softmax-normalized spectral amplitudes). Fused
//! vectors of all sensors are concatenated and mapped to class logits.
//!
//! TVD parameters are shared across the `k` branches and distinct per block;
//! every sensor has its own trunk.

mod blocks;
mod checkpoint;

pub use blocks::{
    pool_branch, AttentionScale, BoundInception, BoundMaf, BoundTvd, InceptionBlock, MafBlock,
    TvdBlock,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::numerics::{glorot_uniform, Arithmetic, Graph, PrecisionMode, Tensor, Var};
use crate::spectral::{self, DecompositionMethod, StftConfig};
use blocks::{VarStream, TVD_PARAM_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_classes: usize,
    pub sensors: usize,
    pub channels_per_sensor: usize,
    pub k: usize,
    /// Number of TVD blocks.
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub kernel_sizes: Vec<usize>,
    pub decomposition: DecompositionMethod,
    /// `None` sizes the STFT from the signal length.
    pub stft: Option<StftConfig>,
    pub use_tvd: bool,
    pub use_maf: bool,
    pub attention_scale: AttentionScale,
    pub precision: PrecisionMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_classes: 2,
            sensors: 1,
            channels_per_sensor: 1,
            k: 4,
            layers: 2,
            d_model: 32,
            heads: 4,
            kernel_sizes: vec![1, 3, 5],
            decomposition: DecompositionMethod::Stft,
            stft: None,
            use_tvd: true,
            use_maf: true,
            attention_scale: AttentionScale::Linear,
            precision: PrecisionMode::Mixed,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_classes", self.n_classes),
            ("sensors", self.sensors),
            ("channels_per_sensor", self.channels_per_sensor),
            ("k", self.k),
            ("d_model", self.d_model),
            ("heads", self.heads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            bail!(Config, "{name} must be positive");
        }
        if !self.d_model.is_multiple_of(self.heads) {
            bail!(
                Config,
                "d_model ({}) must be divisible by heads ({})",
                self.d_model,
                self.heads
            );
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|s| s % 2 == 0) {
            bail!(
                Config,
                "kernel sizes must be a non-empty list of odd integers"
            );
        }
        Ok(())
    }

    pub fn total_channels(&self) -> usize {
        self.sensors * self.channels_per_sensor
    }
}

/// One sensor's feature extractor and fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorTrunk {
    /// `[d_model×C×1×1]`.
    pub embed: Tensor,
    pub embed_bias: Tensor,
    pub inception: InceptionBlock,
    pub tvd: Vec<TvdBlock>,
    pub maf: MafBlock,
}

struct BoundTrunk {
    embed: Var,
    embed_bias: Var,
    inception: BoundInception,
    tvd: Vec<BoundTvd>,
    maf: BoundMaf,
}

impl SensorTrunk {
    fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (c, d) = (cfg.channels_per_sensor, cfg.d_model);
        Ok(Self {
            embed: glorot_uniform(&[d, c, 1, 1], c, d, rng),
            embed_bias: Tensor::zeros(&[d]).with_requires_grad(true),
            inception: InceptionBlock::new(d, d, &cfg.kernel_sizes, rng)?,
            tvd: (0..cfg.layers)
                .map(|_| TvdBlock::new(d, rng))
                .collect::<Result<_>>()?,
            maf: MafBlock::new(d, cfg.heads, cfg.attention_scale, rng)?,
        })
    }

    fn parameters(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embed, &self.embed_bias];
        out.extend(self.inception.parameters());
        for block in &self.tvd {
            out.extend(block.parameters());
        }
        out.extend(self.maf.parameters());
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed, &mut self.embed_bias];
        out.extend(self.inception.parameters_mut());
        for block in &mut self.tvd {
            out.extend(block.parameters_mut());
        }
        out.extend(self.maf.parameters_mut());
        out
    }

    fn parameter_names(&self, prefix: &str) -> Vec<String> {
        let mut out = vec![
            format!("{prefix}.embed.weight"),
            format!("{prefix}.embed.bias"),
        ];
        out.extend(
            self.inception
                .parameter_names()
                .into_iter()
                .map(|n| format!("{prefix}.inception.{n}")),
        );
        for l in 0..self.tvd.len() {
            out.extend(
                TVD_PARAM_NAMES
                    .iter()
                    .map(|n| format!("{prefix}.tvd{l}.{n}")),
            );
        }
        out.extend(
            self.maf
                .parameter_names()
                .into_iter()
                .map(|n| format!("{prefix}.maf.{n}")),
        );
        out
    }

    fn bind_from<I: Iterator<Item = Var>>(&self, vars: &mut VarStream<I>) -> BoundTrunk {
        BoundTrunk {
            embed: vars.next(),
            embed_bias: vars.next(),
            inception: InceptionBlock::bind_from(self.inception.kernels.len(), vars),
            tvd: self.tvd.iter().map(|_| TvdBlock::bind_from(vars)).collect(),
            maf: self.maf.bind_from(vars),
        }
    }
}

/// A signal already decomposed and folded, ready for repeated forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    pub sensors: Vec<PreparedSensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSensor {
    /// Folded `[C×p×f]` maps, one per selected period, strongest first.
    pub branches: Vec<Tensor>,
    pub periods: Vec<usize>,
    pub frequencies: Vec<usize>,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdanetModel {
    pub config: ModelConfig,
    pub trunks: Vec<SensorTrunk>,
    /// `[S·d_model × n]`.
    pub classifier: Tensor,
    pub classifier_bias: Tensor,
}

impl TdanetModel {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunks = (0..config.sensors)
            .map(|_| SensorTrunk::new(&config, &mut rng))
            .collect::<Result<_>>()?;
        let width = config.sensors * config.d_model;
        let mut model = Self {
            classifier: glorot_uniform(
                &[width, config.n_classes],
                width,
                config.n_classes,
                &mut rng,
            ),
            classifier_bias: Tensor::zeros(&[config.n_classes]).with_requires_grad(true),
            trunks,
            config,
        };
        let storage = model.config.precision.storage();
        for p in model.parameters_mut() {
            storage.round_slice(p.data_mut());
        }
        Ok(model)
    }

    /// Parameters in a fixed order shared by [`Self::parameter_names`],
    /// [`Self::parameters_mut`] and the gradients from [`Self::loss_and_gradients`].
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self
            .trunks
            .iter()
            .flat_map(SensorTrunk::parameters)
            .collect();
        out.extend([&self.classifier, &self.classifier_bias]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .trunks
            .iter_mut()
            .flat_map(SensorTrunk::parameters_mut)
            .collect();
        out.extend([&mut self.classifier, &mut self.classifier_bias]);
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .trunks
            .iter()
            .enumerate()
            .flat_map(|(s, t)| t.parameter_names(&format!("sensor{s}")))
            .collect();
        out.extend([
            "classifier.weight".to_string(),
            "classifier.bias".to_string(),
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Decomposes one sensor's `[T×C_s]` signal and folds it per period.
    pub fn prepare_sensor(&self, signal: &Tensor) -> Result<PreparedSensor> {
        let cfg = &self.config;
        match signal.shape() {
            [_, c] if *c == cfg.channels_per_sensor => {}
            s => bail!(
                Dimension,
                "sensor signal must be [T×{}], got {s:?}",
                cfg.channels_per_sensor
            ),
        }
        // The spectrum is taken of the mean-removed signal: min-max inputs sit
        // on a large DC offset that a tapered STFT window smears into its
        // lowest bins. The full-length DFT is unaffected (DC is excluded).
        let dec = spectral::decompose(
            &center_channels(signal),
            cfg.decomposition,
            cfg.stft.as_ref(),
            cfg.k,
        )?;
        let branches = dec
            .periods
            .iter()
            .zip(&dec.frequencies)
            .map(|(&p, &f)| Ok(spectral::reshape_to_2d(signal, p, f)?.data))
            .collect::<Result<_>>()?;
        Ok(PreparedSensor {
            branches,
            periods: dec.periods,
            frequencies: dec.frequencies,
            amplitudes: dec.amplitudes,
        })
    }

    pub fn prepare_sensors(&self, signals: &[Tensor]) -> Result<PreparedInput> {
        if signals.len() != self.config.sensors {
            bail!(
                Config,
                "model expects {} sensors, got {}",
                self.config.sensors,
                signals.len()
            );
        }
        Ok(PreparedInput {
            sensors: signals
                .iter()
                .map(|s| self.prepare_sensor(s))
                .collect::<Result<_>>()?,
        })
    }

    /// Splits a `[T×S·C_s]` signal into consecutive channel groups, one per
    /// sensor, and prepares each.
    pub fn prepare(&self, signal: &Tensor) -> Result<PreparedInput> {
        let cs = self.config.channels_per_sensor;
        match signal.shape() {
            [_, c] if *c == self.config.total_channels() => {}
            s => bail!(
                Dimension,
                "signal must be [T×{}] ({} sensors × {cs} channels), got {s:?}",
                self.config.total_channels(),
                self.config.sensors
            ),
        }
        let parts = (0..self.config.sensors)
            .map(|s| signal.columns(s * cs, (s + 1) * cs))
            .collect::<Result<Vec<_>>>()?;
        self.prepare_sensors(&parts)
    }

    fn bind(&self, g: &mut Graph) -> (Vec<BoundTrunk>, Var, Var) {
        let vars: Vec<Var> = self.parameters().into_iter().map(|t| g.param(t)).collect();
        let mut stream = VarStream(vars.into_iter());
        let trunks = self
            .trunks
            .iter()
            .map(|t| t.bind_from(&mut stream))
            .collect();
        let classifier = stream.next();
        let bias = stream.next();
        (trunks, classifier, bias)
    }

    fn trunk_forward(
        &self,
        g: &mut Graph,
        trunk: &BoundTrunk,
        sensor: &PreparedSensor,
    ) -> Result<Var> {
        let d = self.config.d_model;
        let mut pooled = Vec::with_capacity(sensor.branches.len());
        for folded in &sensor.branches {
            let [_, p, f] = *folded.shape() else {
                bail!(
                    Dimension,
                    "folded branch must be [C×p×f], got {:?}",
                    folded.shape()
                );
            };
            let x = g.constant(folded.clone());
            let e = g.conv2d(x, trunk.embed)?;
            let e = g.add_channel_bias(e, trunk.embed_bias)?;
            let h = trunk.inception.forward(g, e)?;
            let flat = g.reshape(h, &[d, p * f])?;
            let mut sites = g.transpose(flat)?;
            if self.config.use_tvd {
                for block in &trunk.tvd {
                    sites = block.forward(g, sites)?;
                }
            }
            pooled.push(g.mean_rows(sites)?);
        }
        let stacked = g.concat_rows(&pooled)?;
        if self.config.use_maf {
            trunk.maf.forward(g, stacked)
        } else {
            let weights = softmax(&sensor.amplitudes);
            let w = g.constant(Tensor::new(&[1, weights.len()], weights)?);
            g.matmul(w, stacked)
        }
    }

    /// Logits `[1×n]` for one prepared input, recorded on `g`.
    fn forward_bound(
        &self,
        g: &mut Graph,
        bound: &(Vec<BoundTrunk>, Var, Var),
        input: &PreparedInput,
    ) -> Result<Var> {
        if input.sensors.len() != self.config.sensors {
            bail!(
                Config,
                "model expects {} sensors, got {}",
                self.config.sensors,
                input.sensors.len()
            );
        }
        let fused = bound
            .0
            .iter()
            .zip(&input.sensors)
            .map(|(t, s)| self.trunk_forward(g, t, s))
            .collect::<Result<Vec<_>>>()?;
        let joined = if fused.len() == 1 {
            fused[0]
        } else {
            g.concat_cols(&fused)?
        };
        let logits = g.matmul(joined, bound.1)?;
        g.add_bias(logits, bound.2)
    }

    /// Records a batch forward pass; returns the `[B×n]` logits.
    pub fn forward_graph(&self, g: &mut Graph, inputs: &[PreparedInput]) -> Result<Var> {
        if inputs.is_empty() {
            bail!(Data, "empty batch");
        }
        let bound = self.bind(g);
        let rows = inputs
            .iter()
            .map(|x| self.forward_bound(g, &bound, x))
            .collect::<Result<Vec<_>>>()?;
        if rows.len() == 1 {
            Ok(rows[0])
        } else {
            g.concat_rows(&rows)
        }
    }

    pub fn logits(&self, input: &PreparedInput) -> Result<Tensor> {
        self.logits_with(input, self.config.precision.compute())
    }

    pub fn logits_with(&self, input: &PreparedInput, arithmetic: Arithmetic) -> Result<Tensor> {
        let mut g = Graph::new(arithmetic);
        let out = self.forward_graph(&mut g, std::slice::from_ref(input))?;
        g.value(out).reshaped(&[self.config.n_classes])
    }

    /// Logits `[n]` for a single-sensor `[T×C]` signal.
    pub fn forward_single_sensor(&self, signal: &Tensor) -> Result<Tensor> {
        if self.config.sensors != 1 {
            bail!(
                Config,
                "single-sensor forward on a {}-sensor model",
                self.config.sensors
            );
        }
        let [t, _] = *signal.shape() else {
            bail!(Dimension, "signal must be [T×C], got {:?}", signal.shape());
        };
        if t < 4 {
            bail!(Data, "signal length {t} is below the minimum of 4 samples");
        }
        self.logits(&self.prepare_sensors(std::slice::from_ref(signal))?)
    }

    /// Logits `[n]` for one `[T×C_s]` signal per sensor.
    pub fn forward_multi_sensor(&self, signals: &[Tensor]) -> Result<Tensor> {
        self.logits(&self.prepare_sensors(signals)?)
    }

    pub fn predict(&self, input: &PreparedInput) -> Result<usize> {
        Ok(self.logits(input)?.argmax())
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(
        &self,
        inputs: &[PreparedInput],
        labels: &[usize],
        arithmetic: Arithmetic,
    ) -> Result<f64> {
        let mut g = Graph::new(arithmetic);
        let logits = self.forward_graph(&mut g, inputs)?;
        let loss = g.cross_entropy(logits, labels)?;
        Ok(g.value(loss).data()[0])
    }

    /// Batch loss and one gradient per parameter (in [`Self::parameters`] order).
    pub fn loss_and_gradients(
        &self,
        inputs: &[PreparedInput],
        labels: &[usize],
        arithmetic: Arithmetic,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new(arithmetic);
        let first = g.len();
        let logits = self.forward_graph(&mut g, inputs)?;
        let loss = g.cross_entropy(logits, labels)?;
        let grads = g.backward(loss)?;
        // Parameters are the first leaves registered by `bind`.
        let gradients = self
            .parameters()
            .iter()
            .enumerate()
            .map(|(i, t)| grads.get_or_zeros(Var::from_index(first + i), t.len()))
            .collect();
        Ok((g.value(loss).data()[0], gradients))
    }
}

/// Subtracts each channel's mean from a `[T×C]` signal.
pub fn center_channels(signal: &Tensor) -> Tensor {
    let [t, c] = *signal.shape() else {
        return signal.clone();
    };
    let mut means = vec![0.0; c];
    for row in signal.data().chunks(c) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= t as f64);
    signal.map_indexed(|i, v| v - means[i % c])
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(sensors: usize, channels: usize) -> ModelConfig {
        ModelConfig {
            n_classes: 3,
            sensors,
            channels_per_sensor: channels,
            k: 2,
            layers: 1,
            d_model: 8,
            heads: 2,
            precision: PrecisionMode::Double,
            ..ModelConfig::default()
        }
    }

    fn wave(t: usize, c: usize, shift: f64) -> Tensor {
        let data = (0..t * c)
            .map(|i| ((i / c) as f64 * 0.7 + shift + (i % c) as f64).sin())
            .collect();
        Tensor::new(&[t, c], data).unwrap()
    }

    #[test]
    fn forward_shape_and_determinism() {
        let m = TdanetModel::new(tiny(1, 2), 3).unwrap();
        let x = wave(32, 2, 0.0);
        let a = m.forward_single_sensor(&x).unwrap();
        assert_eq!(a.shape(), &[3]);
        assert!(a.data().iter().all(|v| v.is_finite()));
        assert_eq!(a, m.forward_single_sensor(&x).unwrap());
    }

    #[test]
    fn names_match_parameters() {
        let m = TdanetModel::new(tiny(2, 1), 3).unwrap();
        let names = m.parameter_names();
        assert_eq!(names.len(), m.parameters().len());
        assert!(names.contains(&"sensor1.tvd0.w3".to_string()));
        assert!(names.contains(&"sensor0.maf.head1.wv".to_string()));
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }

    #[test]
    fn sensor_count_is_checked() {
        let m = TdanetModel::new(tiny(2, 1), 3).unwrap();
        assert!(matches!(
            m.forward_multi_sensor(&[wave(32, 1, 0.0)]),
            Err(crate::Error::Config(_))
        ));
        assert!(matches!(
            m.forward_single_sensor(&wave(32, 1, 0.0)),
            Err(crate::Error::Config(_))
        ));
        let out = m
            .forward_multi_sensor(&[wave(32, 1, 0.0), wave(32, 1, 1.0)])
            .unwrap();
        assert_eq!(out.shape(), &[3]);
    }

    #[test]
    fn ablated_model_runs() {
        let cfg = ModelConfig {
            use_tvd: false,
            use_maf: false,
            ..tiny(1, 1)
        };
        let m = TdanetModel::new(cfg, 1).unwrap();
        assert_eq!(m.forward_single_sensor(&wave(64, 1, 0.3)).unwrap().len(), 3);
    }

    #[test]
    fn gradients_align_with_parameters() {
        let m = TdanetModel::new(tiny(1, 1), 2).unwrap();
        let input = m.prepare(&wave(32, 1, 0.0)).unwrap();
        let (loss, grads) = m
            .loss_and_gradients(std::slice::from_ref(&input), &[1], Arithmetic::Double)
            .unwrap();
        assert!(loss > 0.0);
        for (g, p) in grads.iter().zip(m.parameters()) {
            assert_eq!(g.len(), p.len());
        }
        assert!(grads.last().unwrap().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = ModelConfig {
            heads: 3,
            ..tiny(1, 1)
        };
        assert!(TdanetModel::new(cfg, 0).is_err());
    }
}
