//! Minibatch Adam training, evaluation under optional noise, and ablation
//! sweeps over configuration axes.
//!
//! Every source of randomness derives from `TrainConfig::seed`:
//! model initialization uses `seed`, training-set noise `seed + 1`, test-set
//! noise `seed + 2`, and minibatch shuffling `seed + 3`. Per-record noise
//! seeds mix the set seed with the record index.
//!
//! Input preparation per record: optional Gaussian noise at `snr_db`
//! (power measured on the raw record), then per-channel min-max
//! normalization, then period decomposition and folding.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{add_gaussian_noise, derive_seed, minmax_normalize, LabeledDataset};
use crate::error::{bail, Error, Result};
use crate::metrics::{csv_err, format_snr, ConfusionMatrix, MetricReport};
use crate::model::{AttentionScale, ModelConfig, PreparedInput, TdanetModel};
use crate::numerics::{AdamConfig, AdamState, PrecisionMode};
use crate::spectral::DecompositionMethod;

pub const INIT_SEED_OFFSET: u64 = 0;
pub const TRAIN_NOISE_SEED_OFFSET: u64 = 1;
pub const TEST_NOISE_SEED_OFFSET: u64 = 2;
pub const SHUFFLE_SEED_OFFSET: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// `None` trains and evaluates on clean inputs.
    pub snr_db: Option<f64>,
    pub noise_train: bool,
    pub noise_test: bool,
    pub train_fraction: f64,
    pub k: usize,
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub sensors: usize,
    pub decomposition: DecompositionMethod,
    pub use_tvd: bool,
    pub use_maf: bool,
    pub attention_scale: AttentionScale,
    pub precision: PrecisionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            snr_db: None,
            noise_train: true,
            noise_test: true,
            train_fraction: 0.8,
            k: 4,
            layers: 2,
            d_model: 32,
            heads: 4,
            sensors: 1,
            decomposition: DecompositionMethod::Stft,
            use_tvd: true,
            use_maf: true,
            attention_scale: AttentionScale::Linear,
            precision: PrecisionMode::Mixed,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            bail!(Config, "epochs must be at least 1");
        }
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be at least 1");
        }
        if self.k == 0 {
            bail!(Config, "k must be at least 1");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!(
                Config,
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            );
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                bail!(Config, "snr_db must be finite, got {s}");
            }
        }
        Ok(())
    }

    /// Model hyperparameters for a dataset of `n_classes` and `channels`.
    pub fn model_config(&self, n_classes: usize, channels: usize) -> Result<ModelConfig> {
        if self.sensors == 0 || !channels.is_multiple_of(self.sensors) {
            bail!(
                Config,
                "{channels} channels cannot be split evenly across {} sensors",
                self.sensors
            );
        }
        let cfg = ModelConfig {
            n_classes,
            sensors: self.sensors,
            channels_per_sensor: channels / self.sensors,
            k: self.k,
            layers: self.layers,
            d_model: self.d_model,
            heads: self.heads,
            decomposition: self.decomposition,
            use_tvd: self.use_tvd,
            use_maf: self.use_maf,
            attention_scale: self.attention_scale,
            precision: self.precision,
            ..ModelConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A freshly initialized model sized for `dataset`.
    pub fn build_model(&self, dataset: &LabeledDataset) -> Result<TdanetModel> {
        let channels = dataset.channels().ok_or_else(|| {
            Error::Data("records disagree on channel count (or dataset is empty)".into())
        })?;
        TdanetModel::new(
            self.model_config(dataset.n_classes, channels)?,
            self.seed.wrapping_add(INIT_SEED_OFFSET),
        )
    }

    /// `key=value` lines describing every field, in declaration order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let v = serde_json::to_value(self).expect("config serializes");
        let serde_json::Value::Object(map) = v else {
            unreachable!("config is a struct")
        };
        let order = [
            "epochs",
            "batch_size",
            "lr",
            "seed",
            "snr_db",
            "noise_train",
            "noise_test",
            "train_fraction",
            "k",
            "layers",
            "d_model",
            "heads",
            "sensors",
            "decomposition",
            "use_tvd",
            "use_maf",
            "attention_scale",
            "precision",
        ];
        order
            .iter()
            .map(|&k| {
                let value = match &map[k] {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Null => "clean".into(),
                    other => other.to_string(),
                };
                (k.to_string(), value)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub metrics: MetricReport,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub confusion: ConfusionMatrix,
    pub optimizer_steps: u64,
}

pub const RUN_CSV_HEADER: [&str; 8] = [
    "epoch",
    "snr_db",
    "train_loss",
    "accuracy",
    "overall_accuracy",
    "precision",
    "recall",
    "f1",
];

impl RunReport {
    pub fn final_metrics(&self) -> &MetricReport {
        &self.epochs.last().expect("at least one epoch").metrics
    }

    /// Per-epoch CSV. Wall times are left out so equal runs give equal files.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RUN_CSV_HEADER).map_err(csv_err)?;
        for e in &self.epochs {
            let m = &e.metrics;
            w.write_record([
                e.epoch.to_string(),
                format_snr(self.config.snr_db),
                e.train_loss.to_string(),
                m.accuracy.to_string(),
                m.overall_accuracy.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::Data(format!("csv flush failed: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Timing details that vary between otherwise identical runs.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "wall_seconds_per_epoch": self.epochs.iter().map(|e| e.wall_seconds).collect::<Vec<_>>(),
            "total_wall_seconds": self.epochs.iter().map(|e| e.wall_seconds).sum::<f64>(),
            "optimizer_steps": self.optimizer_steps,
            "confusion": self.confusion.rows(),
        })
    }
}

/// Noise (optional), min-max normalization, decomposition and folding for
/// every record.
pub fn prepare_inputs(
    model: &TdanetModel,
    dataset: &LabeledDataset,
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<Vec<PreparedInput>> {
    dataset
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let noisy = match snr_db {
                Some(snr) => {
                    add_gaussian_noise(&rec.samples, snr, derive_seed(noise_seed, i as u64))?
                }
                None => rec.samples.clone(),
            };
            model.prepare(&minmax_normalize(&noisy)?)
        })
        .collect()
}

fn check_classes(model: &TdanetModel, dataset: &LabeledDataset) -> Result<()> {
    if model.config.n_classes != dataset.n_classes {
        bail!(
            Config,
            "model has {} classes, dataset has {}",
            model.config.n_classes,
            dataset.n_classes
        );
    }
    Ok(())
}

fn confusion_of(
    model: &TdanetModel,
    inputs: &[PreparedInput],
    labels: &[usize],
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(model.config.n_classes)?;
    for (x, &y) in inputs.iter().zip(labels) {
        cm.update(y, model.predict(x)?)?;
    }
    Ok(cm)
}

/// Forward-only pass over `dataset`, noised at `snr_db` when given.
pub fn evaluate(
    model: &TdanetModel,
    dataset: &LabeledDataset,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<(ConfusionMatrix, MetricReport)> {
    check_classes(model, dataset)?;
    let inputs = prepare_inputs(model, dataset, snr_db, seed)?;
    let labels: Vec<usize> = dataset.records.iter().map(|r| r.label).collect();
    let cm = confusion_of(model, &inputs, &labels)?;
    let report = cm.report();
    Ok((cm, report))
}

/// Splits `dataset` with its own split seed and fraction from `cfg`, then
/// trains on one side and evaluates on the other after every epoch.
pub fn train(
    model: &mut TdanetModel,
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<RunReport> {
    let (train_set, test_set) =
        crate::data::train_test_split(dataset, cfg.train_fraction, dataset.split_seed)?;
    train_split(model, &train_set, &test_set, cfg)
}

pub fn train_split(
    model: &mut TdanetModel,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<RunReport> {
    cfg.validate()?;
    check_classes(model, train_set)?;
    check_classes(model, test_set)?;
    let train_snr = cfg.snr_db.filter(|_| cfg.noise_train);
    let test_snr = cfg.snr_db.filter(|_| cfg.noise_test);
    let train_inputs = prepare_inputs(
        model,
        train_set,
        train_snr,
        cfg.seed.wrapping_add(TRAIN_NOISE_SEED_OFFSET),
    )?;
    let test_inputs = prepare_inputs(
        model,
        test_set,
        test_snr,
        cfg.seed.wrapping_add(TEST_NOISE_SEED_OFFSET),
    )?;
    let train_labels: Vec<usize> = train_set.records.iter().map(|r| r.label).collect();
    let test_labels: Vec<usize> = test_set.records.iter().map(|r| r.label).collect();

    let precision = model.config.precision;
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, precision.storage())?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SHUFFLE_SEED_OFFSET));
    let names = model.parameter_names();
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut confusion = ConfusionMatrix::new(model.config.n_classes)?;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let inputs: Vec<PreparedInput> =
                batch.iter().map(|&i| train_inputs[i].clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_labels[i]).collect();
            let (loss, grads) = model
                .loss_and_gradients(&inputs, &labels, precision.compute())
                .map_err(|e| abort(epoch, b, e))?;
            if !loss.is_finite() {
                bail!(Training, "epoch {epoch}, batch {b}: non-finite loss {loss}");
            }
            loss_sum += loss * batch.len() as f64;
            for (p, g) in model.parameters_mut().into_iter().zip(grads) {
                p.set_grad(g)?;
            }
            let params = names.iter().map(String::as_str).zip(model.parameters_mut());
            adam.apply(params).map_err(|e| abort(epoch, b, e))?;
        }
        confusion = confusion_of(model, &test_inputs, &test_labels)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_inputs.len() as f64,
            metrics: confusion.report(),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, test overall accuracy {:.4}",
            record.train_loss,
            record.metrics.overall_accuracy
        );
        epochs.push(record);
    }
    for p in model.parameters_mut() {
        p.clear_grad();
    }
    Ok(RunReport {
        config: cfg.clone(),
        epochs,
        confusion,
        optimizer_steps: adam.step_count(),
    })
}

fn abort(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(m) | Error::Training(m) => {
            Error::Training(format!("epoch {epoch}, batch {batch}: {m}"))
        }
        other => other,
    }
}

/// One sweep dimension and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    Decomposition(Vec<DecompositionMethod>),
    K(Vec<usize>),
    UseTvd(Vec<bool>),
    UseMaf(Vec<bool>),
    SnrDb(Vec<Option<f64>>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Decomposition(_) => "decomposition",
            Axis::K(_) => "k",
            Axis::UseTvd(_) => "use_tvd",
            Axis::UseMaf(_) => "use_maf",
            Axis::SnrDb(_) => "snr_db",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::Decomposition(v) => v.len(),
            Axis::K(v) => v.len(),
            Axis::UseTvd(v) => v.len(),
            Axis::UseMaf(v) => v.len(),
            Axis::SnrDb(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sets value `i` on `cfg`; returns its display form.
    fn apply(&self, i: usize, cfg: &mut TrainConfig) -> String {
        match self {
            Axis::Decomposition(v) => {
                cfg.decomposition = v[i];
                v[i].to_string()
            }
            Axis::K(v) => {
                cfg.k = v[i];
                v[i].to_string()
            }
            Axis::UseTvd(v) => {
                cfg.use_tvd = v[i];
                v[i].to_string()
            }
            Axis::UseMaf(v) => {
                cfg.use_maf = v[i];
                v[i].to_string()
            }
            Axis::SnrDb(v) => {
                cfg.snr_db = v[i];
                format_snr(v[i])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    /// `(axis name, value)` in axis order.
    pub assignment: Vec<(String, String)>,
    pub report: RunReport,
}

impl SweepRun {
    /// File stem encoding the axis values, e.g. `run_k=4_snr_db=-8`.
    pub fn file_stem(&self) -> String {
        let parts: Vec<String> = self
            .assignment
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("run_{}", parts.join("_"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub runs: Vec<SweepRun>,
}

impl SweepTable {
    /// One row per run: axis values, then final-epoch metrics.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.axes.clone();
        header.extend(
            [
                "train_loss",
                "accuracy",
                "overall_accuracy",
                "precision",
                "recall",
                "f1",
                "run_file",
            ]
            .map(String::from),
        );
        w.write_record(&header).map_err(csv_err)?;
        for run in &self.runs {
            let last = run.report.epochs.last().expect("at least one epoch");
            let m = &last.metrics;
            let mut row: Vec<String> = run.assignment.iter().map(|(_, v)| v.clone()).collect();
            row.extend([
                last.train_loss.to_string(),
                m.accuracy.to_string(),
                m.overall_accuracy.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                format!("{}.csv", run.file_stem()),
            ]);
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::Data(format!("csv flush failed: {e}")))
    }

    /// Writes the summary plus one CSV per run into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("summary.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.write_summary_csv(std::io::BufWriter::new(file))?;
        for run in &self.runs {
            run.report
                .save_csv(&dir.join(format!("{}.csv", run.file_stem())))?;
        }
        Ok(())
    }
}

/// Every configuration in the Cartesian product of `axes`, in row-major
/// order (last axis varies fastest).
pub fn sweep_configs(
    base: &TrainConfig,
    axes: &[Axis],
) -> Result<Vec<(Vec<(String, String)>, TrainConfig)>> {
    if let Some(a) = axes.iter().find(|a| a.is_empty()) {
        bail!(Config, "sweep axis '{}' has no values", a.name());
    }
    let mut names: Vec<&str> = axes.iter().map(Axis::name).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        bail!(Config, "sweep axes must be distinct");
    }
    let total: usize = axes.iter().map(Axis::len).product();
    let mut out = Vec::with_capacity(total);
    for mut n in 0..total {
        let mut idx = vec![0; axes.len()];
        for (slot, axis) in idx.iter_mut().zip(axes).rev() {
            *slot = n % axis.len();
            n /= axis.len();
        }
        let mut cfg = base.clone();
        let assignment = axes
            .iter()
            .zip(&idx)
            .map(|(a, &i)| (a.name().to_string(), a.apply(i, &mut cfg)))
            .collect();
        out.push((assignment, cfg));
    }
    Ok(out)
}

/// Runs every configuration of the sweep, each with a fresh model, using up
/// to `jobs` worker threads. Results do not depend on `jobs`.
pub fn ablation_sweep(
    dataset: &LabeledDataset,
    base: &TrainConfig,
    axes: &[Axis],
    jobs: usize,
) -> Result<SweepTable> {
    let configs = sweep_configs(base, axes)?;
    let run_one = |cfg: &TrainConfig| -> Result<RunReport> {
        let mut model = cfg.build_model(dataset)?;
        train(&mut model, dataset, cfg)
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let r = run_one(&configs[i].1);
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("no poisoned workers");
    let runs = configs
        .into_iter()
        .zip(results)
        .map(|((assignment, _), r)| {
            Ok(SweepRun {
                assignment,
                report: r.expect("every run executed")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        axes: axes.iter().map(|a| a.name().to_string()).collect(),
        runs,
    })
}
