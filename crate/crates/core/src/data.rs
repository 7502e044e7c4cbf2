//! Dataset construction: plain-text ingestion, windowing, min-max
//! normalization, SNR-controlled Gaussian noise, and two synthetic
//! generators (bearing-like vibration and aircraft air-data sensor faults).
//!
//! ## Directory format
//!
//! A dataset directory holds `manifest.csv` with the header `file,label` and
//! one row per data file. Each data file is UTF-8 text with one time step per
//! line and `C` whitespace-separated numeric columns. Labels are class
//! indices `0..n`; every index in that range must occur at least once.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::metrics::csv_err;
use crate::numerics::Tensor;

/// Mixes a base seed with an index into an independent-looking seed
/// (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    /// `[T×C]`.
    pub samples: Tensor,
    pub label: usize,
    pub sensor_names: Option<Vec<String>>,
    pub sample_rate: Option<f64>,
}

impl SignalRecord {
    pub fn new(samples: Tensor, label: usize) -> Result<Self> {
        let [t, _] = *samples.shape() else {
            bail!(
                Dimension,
                "record samples must be [T×C], got {:?}",
                samples.shape()
            );
        };
        if t < 4 {
            bail!(Data, "record has {t} samples, need at least 4");
        }
        Ok(Self {
            samples,
            label,
            sensor_names: None,
            sample_rate: None,
        })
    }

    pub fn length(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<SignalRecord>,
    pub n_classes: usize,
    pub split_seed: u64,
    pub train_fraction: f64,
}

impl LabeledDataset {
    pub fn new(records: Vec<SignalRecord>, n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            bail!(Config, "a dataset needs at least one class");
        }
        if let Some(r) = records.iter().find(|r| r.label >= n_classes) {
            bail!(
                Data,
                "label {} out of range for {n_classes} classes",
                r.label
            );
        }
        Ok(Self {
            records,
            n_classes,
            split_seed: 0,
            train_fraction: 0.8,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    /// Channel count shared by every record, if uniform.
    pub fn channels(&self) -> Option<usize> {
        let c = self.records.first()?.channels();
        self.records.iter().all(|r| r.channels() == c).then_some(c)
    }

    /// Splits with the dataset's own `split_seed` and `train_fraction`.
    pub fn split(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        train_test_split(self, self.train_fraction, self.split_seed)
    }

    fn with_records(&self, records: Vec<SignalRecord>) -> Self {
        Self {
            records,
            n_classes: self.n_classes,
            split_seed: self.split_seed,
            train_fraction: self.train_fraction,
        }
    }
}

/// Maps every channel to `[0, 1]` via `(x - min) / (max - min)`.
pub fn minmax_normalize(signal: &Tensor) -> Result<Tensor> {
    let [t, c] = *signal.shape() else {
        bail!(Dimension, "signals must be [T×C], got {:?}", signal.shape());
    };
    let data = signal.data();
    let mut out = vec![0.0; data.len()];
    for ch in 0..c {
        let column = (0..t).map(|i| data[i * c + ch]);
        let min = column.clone().fold(f64::INFINITY, f64::min);
        let max = column.fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            bail!(
                Data,
                "channel {ch} is constant ({min}); cannot min-max normalize"
            );
        }
        let span = max - min;
        for i in 0..t {
            out[i * c + ch] = (data[i * c + ch] - min) / span;
        }
    }
    Tensor::new(&[t, c], out)
}

/// Consecutive `window`-long slices starting every `stride` samples; a tail
/// shorter than `window` is dropped.
pub fn segment(signal: &Tensor, window: usize, stride: usize) -> Result<Vec<Tensor>> {
    let [n, c] = *signal.shape() else {
        bail!(Dimension, "signals must be [N×C], got {:?}", signal.shape());
    };
    if window == 0 || stride == 0 {
        bail!(Config, "window and stride must be positive");
    }
    if window > n {
        bail!(Data, "window {window} exceeds signal length {n}");
    }
    let count = (n - window) / stride + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * stride * c;
            Tensor::from_parts(
                vec![window, c],
                signal.data()[start..start + window * c].to_vec(),
            )
        })
        .collect())
}

/// Per-channel mean of squared samples.
pub fn channel_power(signal: &Tensor) -> Vec<f64> {
    let [t, c] = *signal.shape() else {
        return Vec::new();
    };
    let data = signal.data();
    (0..c)
        .map(|ch| (0..t).map(|i| data[i * c + ch].powi(2)).sum::<f64>() / t as f64)
        .collect()
}

/// Adds zero-mean Gaussian noise so that each channel's power ratio
/// `P_signal / P_noise` equals `10^(snr_db / 10)`.
pub fn add_gaussian_noise(signal: &Tensor, snr_db: f64, seed: u64) -> Result<Tensor> {
    let [_, c] = *signal.shape() else {
        bail!(Dimension, "signals must be [T×C], got {:?}", signal.shape());
    };
    if !snr_db.is_finite() {
        bail!(Config, "SNR must be finite, got {snr_db}");
    }
    let power = channel_power(signal);
    if let Some(ch) = power.iter().position(|&p| !(p > 0.0)) {
        bail!(Data, "channel {ch} has zero power; SNR is undefined");
    }
    let ratio = 10f64.powf(snr_db / 10.0);
    let std: Vec<f64> = power.iter().map(|p| (p / ratio).sqrt()).collect();
    let mut rng = rng(seed);
    let out = signal
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            x + std[i % c] * z
        })
        .collect();
    Tensor::new(signal.shape(), out)
}

/// Stratified, seeded split. Each class with at least two records lands in
/// both halves.
pub fn train_test_split(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        bail!(Config, "train fraction must lie in (0, 1), got {fraction}");
    }
    let mut rng = rng(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, r) in ds.records.iter().enumerate() {
        by_class[r.label].push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut n_train = (n as f64 * fraction).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        }
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    if train.is_empty() || test.is_empty() {
        bail!(
            Data,
            "split of {} records at fraction {fraction} leaves an empty side",
            ds.len()
        );
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.records[i].clone()).collect();
    Ok((ds.with_records(pick(&train)), ds.with_records(pick(&test))))
}

/// Period of the base tone for bearing class `c`: 8, 12, 16, ...
pub fn bearing_class_period(class: usize) -> usize {
    8 + 4 * class
}

/// Spacing of the fault impulse train for bearing class `c`.
pub fn bearing_impulse_spacing(class: usize) -> usize {
    19 + 7 * class
}

/// Bearing-like vibration records.
///
/// Class `c` is a sinusoid of period [`bearing_class_period`] (amplitude
/// U[0.8, 1.2], random phase), plus a train of decaying ringing impulses every
/// [`bearing_impulse_spacing`] samples (ring period 4, decay constant 3,
/// peak 0.5, random offset), plus white noise of standard deviation 0.05.
pub fn synth_bearing_dataset(
    n_classes: usize,
    per_class: usize,
    length: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_classes < 2 {
        bail!(Config, "need at least 2 classes, got {n_classes}");
    }
    if per_class == 0 {
        bail!(Config, "per_class must be positive");
    }
    if length < 4 {
        bail!(Config, "record length must be at least 4, got {length}");
    }
    let tau = std::f64::consts::TAU;
    let noise = Normal::new(0.0, 0.05).expect("valid std");
    let mut records = Vec::with_capacity(n_classes * per_class);
    for class in 0..n_classes {
        let period = bearing_class_period(class) as f64;
        let spacing = bearing_impulse_spacing(class);
        for j in 0..per_class {
            let mut rng = rng(derive_seed(seed, (class * per_class + j) as u64));
            let amp = rng.random_range(0.8..1.2);
            let phase = rng.random_range(0.0..tau);
            let offset = rng.random_range(0..spacing);
            let data: Vec<f64> = (0..length)
                .map(|n| {
                    let mut x = amp * (tau * n as f64 / period + phase).sin();
                    let since = (n + spacing - offset) % spacing;
                    let d = since as f64;
                    x += 0.5 * (-d / 3.0).exp() * (tau * d / 4.0).sin();
                    x + noise.sample(&mut rng)
                })
                .collect();
            let mut rec = SignalRecord::new(Tensor::new(&[length, 1], data)?, class)?;
            rec.sample_rate = Some(48_000.0);
            records.push(rec);
        }
    }
    let mut ds = LabeledDataset::new(records, n_classes)?;
    ds.split_seed = derive_seed(seed, u64::MAX);
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlightSensor {
    /// Airspeed `V_m`.
    Airspeed,
    /// Angle of attack `α_m`.
    AngleOfAttack,
    /// Sideslip angle `β_m`.
    Sideslip,
    None,
}

impl FlightSensor {
    pub fn channel(self) -> Option<usize> {
        match self {
            FlightSensor::Airspeed => Some(0),
            FlightSensor::AngleOfAttack => Some(1),
            FlightSensor::Sideslip => Some(2),
            FlightSensor::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultType {
    Drift,
    ExtraNoise,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultSign {
    Positive,
    Negative,
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MagnitudeUnit {
    /// Fraction of the nominal reading.
    Fraction,
    Degrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultCase {
    pub case_id: usize,
    pub sensor: FlightSensor,
    pub fault_type: FaultType,
    pub magnitude_range: (f64, f64),
    pub unit: MagnitudeUnit,
    pub sign: FaultSign,
}

pub const FLIGHT_SENSOR_NAMES: [&str; 3] = ["V_m", "alpha_m", "beta_m"];

/// The six aircraft sensor cases: 0 is fault-free, 1 is airspeed loss,
/// 2-3 are angle-of-attack drift/noise, 4-5 are sideslip drift/noise.
pub fn fault_cases() -> [FaultCase; 6] {
    use FaultSign::*;
    use FaultType::*;
    use FlightSensor::*;
    let case = |case_id, sensor, fault_type, lo, hi, unit, sign| FaultCase {
        case_id,
        sensor,
        fault_type,
        magnitude_range: (lo, hi),
        unit,
        sign,
    };
    [
        case(
            0,
            FlightSensor::None,
            FaultType::None,
            0.0,
            0.0,
            MagnitudeUnit::Fraction,
            Positive,
        ),
        case(
            1,
            Airspeed,
            Drift,
            0.5,
            1.0,
            MagnitudeUnit::Fraction,
            Negative,
        ),
        case(
            2,
            AngleOfAttack,
            Drift,
            5.0,
            10.0,
            MagnitudeUnit::Degrees,
            Either,
        ),
        case(
            3,
            AngleOfAttack,
            ExtraNoise,
            5.0,
            10.0,
            MagnitudeUnit::Degrees,
            Positive,
        ),
        case(
            4,
            Sideslip,
            Drift,
            5.0,
            10.0,
            MagnitudeUnit::Degrees,
            Either,
        ),
        case(
            5,
            Sideslip,
            ExtraNoise,
            5.0,
            10.0,
            MagnitudeUnit::Degrees,
            Positive,
        ),
    ]
}

/// Where and how strongly a fault was injected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultInjection {
    pub start: usize,
    pub len: usize,
    /// Drift fraction, drift offset in degrees (signed), or noise std.
    pub magnitude: f64,
}

/// Smooth, fault-free `[T×3]` air-data trajectories: airspeed around 25 m/s,
/// angle of attack around 4°, sideslip around 0°, each with one or two slow
/// oscillations and small sensor noise.
pub fn clean_flight_signal(length: usize, rng: &mut impl Rng) -> Result<Tensor> {
    let tau = std::f64::consts::TAU;
    let mut channel = |base: f64, swing: f64, sensor_std: f64| -> Vec<f64> {
        let f1 = rng.random_range(0.5..2.0);
        let f2 = rng.random_range(2.0..4.0);
        let (p1, p2) = (rng.random_range(0.0..tau), rng.random_range(0.0..tau));
        let a1 = swing * rng.random_range(0.6..1.0);
        let a2 = 0.3 * swing * rng.random_range(0.0..1.0);
        let noise = Normal::new(0.0, sensor_std).expect("valid std");
        (0..length)
            .map(|n| {
                let s = n as f64 / length as f64;
                base + a1 * (tau * f1 * s + p1).sin()
                    + a2 * (tau * f2 * s + p2).sin()
                    + noise.sample(rng)
            })
            .collect()
    };
    let v = channel(25.0, 2.0, 0.2);
    let a = channel(4.0, 1.5, 0.1);
    let b = channel(0.0, 1.0, 0.1);
    let data = (0..length).flat_map(|i| [v[i], a[i], b[i]]).collect();
    Tensor::new(&[length, 3], data)
}

/// Applies `case` to a `[T×3]` flight signal over a random contiguous
/// interval covering 50-80% of the window.
pub fn inject_fault(
    signal: &mut Tensor,
    case: &FaultCase,
    rng: &mut impl Rng,
) -> Result<Option<FaultInjection>> {
    let [t, c] = *signal.shape() else {
        bail!(Dimension, "flight signals must be [T×3]");
    };
    let Some(ch) = case.sensor.channel() else {
        return Ok(None);
    };
    if ch >= c {
        bail!(
            Dimension,
            "fault targets channel {ch} but the signal has {c}"
        );
    }
    let min_len = t.div_ceil(2);
    let max_len = ((t * 4) / 5).max(min_len);
    let len = rng.random_range(min_len..=max_len);
    let start = rng.random_range(0..=t - len);
    let (lo, hi) = case.magnitude_range;
    let mut magnitude = rng.random_range(lo..=hi);
    let data = signal.data_mut();
    match case.fault_type {
        FaultType::None => return Ok(None),
        FaultType::Drift if case.unit == MagnitudeUnit::Fraction => {
            for i in start..start + len {
                data[i * c + ch] *= 1.0 - magnitude;
            }
        }
        FaultType::Drift => {
            let negative = match case.sign {
                FaultSign::Negative => true,
                FaultSign::Positive => false,
                FaultSign::Either => rng.random_bool(0.5),
            };
            if negative {
                magnitude = -magnitude;
            }
            for i in start..start + len {
                data[i * c + ch] += magnitude;
            }
        }
        FaultType::ExtraNoise => {
            let noise = Normal::new(0.0, magnitude).expect("valid std");
            for i in start..start + len {
                data[i * c + ch] += noise.sample(rng);
            }
        }
    }
    Ok(Some(FaultInjection {
        start,
        len,
        magnitude,
    }))
}

/// Six-class aircraft sensor fault records over three channels
/// (`V_m`, `alpha_m`, `beta_m`); the label is the fault case id.
pub fn synth_flight_dataset(per_class: usize, length: usize, seed: u64) -> Result<LabeledDataset> {
    if per_class == 0 {
        bail!(Config, "per_class must be positive");
    }
    if length < 4 {
        bail!(Config, "record length must be at least 4, got {length}");
    }
    let cases = fault_cases();
    let mut records = Vec::with_capacity(cases.len() * per_class);
    for case in &cases {
        for j in 0..per_class {
            let mut rng = rng(derive_seed(seed, (case.case_id * per_class + j) as u64));
            let mut samples = clean_flight_signal(length, &mut rng)?;
            inject_fault(&mut samples, case, &mut rng)?;
            let mut rec = SignalRecord::new(samples, case.case_id)?;
            rec.sensor_names = Some(FLIGHT_SENSOR_NAMES.iter().map(|s| s.to_string()).collect());
            records.push(rec);
        }
    }
    let mut ds = LabeledDataset::new(records, cases.len())?;
    ds.split_seed = derive_seed(seed, u64::MAX);
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Window length for segmenting long files. Files no longer than the
    /// window are taken whole as one record; `None` never segments.
    pub window: Option<usize>,
    /// Defaults to the window length (non-overlapping windows).
    pub stride: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            window: Some(4096),
            stride: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    file: String,
    label: String,
}

fn parse_numeric_file(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::Data(format!(
                    "{}:{}: non-numeric value '{tok}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            if !v.is_finite() {
                bail!(
                    Data,
                    "{}:{}: non-finite value '{tok}'",
                    path.display(),
                    lineno + 1
                );
            }
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => bail!(
                Data,
                "{}:{}: expected {c} columns, found {count}",
                path.display(),
                lineno + 1
            ),
            _ => {}
        }
        rows += 1;
    }
    let Some(c) = cols else {
        bail!(Data, "{}: no data rows", path.display());
    };
    Tensor::new(&[rows, c], data)
}

/// Reads a dataset directory (see the module docs for the format).
pub fn load_cwru_format(dir: &Path, opts: LoadOptions) -> Result<LabeledDataset> {
    let manifest = dir.join("manifest.csv");
    if !manifest.is_file() {
        bail!(Data, "{}: missing manifest.csv", dir.display());
    }
    let mut reader = csv::Reader::from_path(&manifest).map_err(csv_err)?;
    let mut entries = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Data(format!("{}:{line}: {e}", manifest.display())))?;
        let label: usize = row.label.trim().parse().map_err(|_| {
            Error::Data(format!(
                "{}:{line}: unknown label '{}' (labels are class indices)",
                manifest.display(),
                row.label
            ))
        })?;
        entries.push((row.file, label, line));
    }
    if entries.is_empty() {
        bail!(Data, "{}: manifest lists no files", manifest.display());
    }
    let n_classes = entries.iter().map(|e| e.1).max().unwrap_or(0) + 1;
    let mut seen = vec![false; n_classes];
    entries.iter().for_each(|e| seen[e.1] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        let (_, label, line) = entries
            .iter()
            .find(|e| e.1 > missing)
            .expect("max label exists");
        bail!(
            Data,
            "{}:{line}: unknown label {label}: class {missing} never occurs, labels must cover 0..{n_classes}",
            manifest.display()
        );
    }

    let mut records = Vec::new();
    for (file, label, _) in &entries {
        let samples = parse_numeric_file(&dir.join(file))?;
        let n = samples.shape()[0];
        let pieces = match opts.window {
            Some(w) if n > w => segment(&samples, w, opts.stride.unwrap_or(w))?,
            _ => vec![samples],
        };
        for p in pieces {
            records.push(
                SignalRecord::new(p, *label).map_err(|e| Error::Data(format!("{file}: {e}")))?,
            );
        }
    }
    LabeledDataset::new(records, n_classes)
}

/// Writes `ds` in the directory format, one file per record.
pub fn write_dataset(ds: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).map_err(csv_err)?;
    w.write_record(["file", "label"]).map_err(csv_err)?;
    for (i, rec) in ds.records.iter().enumerate() {
        let name = format!("record_{i:05}.txt");
        let c = rec.channels();
        let mut text = String::with_capacity(rec.samples.len() * 20);
        for row in rec.samples.data().chunks(c) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        let path = dir.join(&name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        w.write_record([name, rec.label.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Tensor {
        Tensor::new(&[values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn minmax_cases() {
        assert_eq!(
            minmax_normalize(&col(&[2.0, 4.0, 6.0])).unwrap().data(),
            &[0.0, 0.5, 1.0]
        );
        let unit = col(&[0.0, 0.3, 1.0, 0.7]);
        let again = minmax_normalize(&unit).unwrap();
        assert!(again.max_abs_diff(&unit) < 1e-12);
        let two = Tensor::new(&[3, 2], vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let err = minmax_normalize(&two).unwrap_err();
        assert!(err.to_string().contains("channel 1"), "{err}");
    }

    #[test]
    fn segment_cases() {
        let x = col(&(0..10).map(f64::from).collect::<Vec<_>>());
        let segs = segment(&x, 4, 4).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].data(), &[4.0, 5.0, 6.0, 7.0]);
        let whole = segment(&x, 10, 10).unwrap();
        assert_eq!(whole, vec![x.clone()]);
        assert!(matches!(segment(&x, 11, 1), Err(Error::Data(_))));
        let long = Tensor::zeros(&[4096 * 3, 1]);
        assert_eq!(segment(&long, 4096, 4096).unwrap().len(), 3);
        assert_eq!(segment(&x, 4, 2).unwrap().len(), 4);
    }

    #[test]
    fn noise_variance_follows_snr() {
        let x = col(&[1.0, -1.0, 1.0, -1.0]);
        let n = 40_000;
        let mut sq = 0.0;
        for s in 0..(n / 4) as u64 {
            let y = add_gaussian_noise(&x, 0.0, s).unwrap();
            sq += y
                .data()
                .iter()
                .zip(x.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        let var = sq / n as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
        assert!((10f64.powf(0.4) - 2.5119).abs() < 1e-4);
    }

    #[test]
    fn noise_requires_power() {
        assert!(matches!(
            add_gaussian_noise(&Tensor::zeros(&[8, 1]), 0.0, 1),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn noise_is_seeded() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            add_gaussian_noise(&x, -4.0, 9).unwrap(),
            add_gaussian_noise(&x, -4.0, 9).unwrap()
        );
        assert_ne!(
            add_gaussian_noise(&x, -4.0, 9).unwrap(),
            add_gaussian_noise(&x, -4.0, 10).unwrap()
        );
    }

    #[test]
    fn split_cases() {
        let records = (0..10)
            .map(|i| SignalRecord::new(col(&[i as f64, 1.0, 2.0, 3.0]), i % 2).unwrap())
            .collect();
        let ds = LabeledDataset::new(records, 2).unwrap();
        let (train, test) = train_test_split(&ds, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(train_test_split(&ds, 0.8, 3).unwrap().0, train);
        let mut all: Vec<f64> = train
            .records
            .iter()
            .chain(&test.records)
            .map(|r| r.samples.data()[0])
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(test.class_counts(), vec![1, 1]);
        assert!(train_test_split(&ds, 1.0, 3).is_err());
    }

    #[test]
    fn split_of_single_record_fails() {
        let ds =
            LabeledDataset::new(vec![SignalRecord::new(col(&[0.0; 4]), 0).unwrap()], 1).unwrap();
        assert!(matches!(train_test_split(&ds, 0.8, 0), Err(Error::Data(_))));
    }

    #[test]
    fn bearing_generator_is_deterministic_and_normalizable() {
        let a = synth_bearing_dataset(3, 4, 128, 11).unwrap();
        let b = synth_bearing_dataset(3, 4, 128, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![4, 4, 4]);
        let n = minmax_normalize(&a.records[0].samples).unwrap();
        let (lo, hi) = n
            .data()
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert_eq!((lo, hi), (0.0, 1.0));
        assert_ne!(a, synth_bearing_dataset(3, 4, 128, 12).unwrap());
    }

    #[test]
    fn flight_cases_follow_the_fault_table() {
        let cases = fault_cases();
        assert_eq!(cases[0].fault_type, FaultType::None);
        assert_eq!(cases[1].sensor, FlightSensor::Airspeed);
        assert_eq!(cases[1].magnitude_range, (0.5, 1.0));
        for c in &cases[2..] {
            assert_eq!(c.magnitude_range, (5.0, 10.0));
            assert_eq!(c.unit, MagnitudeUnit::Degrees);
        }
        let ds = synth_flight_dataset(2, 64, 5).unwrap();
        assert_eq!(ds.n_classes, 6);
        assert_eq!(ds.channels(), Some(3));
    }

    #[test]
    fn airspeed_drift_scales_into_loss_range() {
        let mut r = rng(1);
        for _ in 0..20 {
            let clean = clean_flight_signal(100, &mut r).unwrap();
            let mut faulty = clean.clone();
            let inj = inject_fault(&mut faulty, &fault_cases()[1], &mut r)
                .unwrap()
                .unwrap();
            assert!(inj.len >= 50);
            for i in inj.start..inj.start + inj.len {
                let ratio = faulty.data()[i * 3] / clean.data()[i * 3];
                assert!((0.0..=0.5 + 1e-12).contains(&ratio), "ratio {ratio}");
            }
            assert_eq!(
                faulty.data()[1..],
                clean.data()[1..]
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let i = j + 1;
                        if i % 3 == 0 {
                            faulty.data()[i]
                        } else {
                            v
                        }
                    })
                    .collect::<Vec<_>>()[..]
            );
        }
    }

    #[test]
    fn angle_drift_is_a_bounded_offset() {
        let mut r = rng(2);
        for _ in 0..20 {
            let clean = clean_flight_signal(80, &mut r).unwrap();
            let mut faulty = clean.clone();
            let inj = inject_fault(&mut faulty, &fault_cases()[2], &mut r)
                .unwrap()
                .unwrap();
            assert!((5.0..=10.0).contains(&inj.magnitude.abs()));
            for i in 0..80 {
                let d = faulty.data()[i * 3 + 1] - clean.data()[i * 3 + 1];
                let inside = (inj.start..inj.start + inj.len).contains(&i);
                let expected = if inside { inj.magnitude } else { 0.0 };
                assert!((d - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn angle_noise_std_matches_draw() {
        let mut r = rng(3);
        for _ in 0..20 {
            let clean = clean_flight_signal(400, &mut r).unwrap();
            let mut faulty = clean.clone();
            let inj = inject_fault(&mut faulty, &fault_cases()[3], &mut r)
                .unwrap()
                .unwrap();
            let diffs: Vec<f64> = (inj.start..inj.start + inj.len)
                .map(|i| faulty.data()[i * 3 + 1] - clean.data()[i * 3 + 1])
                .collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let var =
                diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
            let rel = (var.sqrt() - inj.magnitude).abs() / inj.magnitude;
            assert!(rel < 0.2, "std {} vs {}", var.sqrt(), inj.magnitude);
        }
    }

    #[test]
    fn loader_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_cwru_format(dir.path(), LoadOptions::default()),
            Err(Error::Data(_))
        ));
        fs::write(dir.path().join("manifest.csv"), "file,label\na.txt,0\n").unwrap();
        fs::write(dir.path().join("a.txt"), "1 2\n3 x\n").unwrap();
        let err = load_cwru_format(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("a.txt:2"), "{err}");

        fs::write(dir.path().join("a.txt"), "1\n2\n3\n4\n").unwrap();
        fs::write(
            dir.path().join("manifest.csv"),
            "file,label\na.txt,0\na.txt,2\n",
        )
        .unwrap();
        let err = load_cwru_format(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("unknown label"), "{err}");
        fs::write(dir.path().join("manifest.csv"), "file,label\na.txt,outer\n").unwrap();
        assert!(load_cwru_format(dir.path(), LoadOptions::default()).is_err());
    }

    #[test]
    fn loader_segments_long_files() {
        let dir = tempfile::tempdir().unwrap();
        let text: String = (0..25).map(|i| format!("{i}\n")).collect();
        fs::write(dir.path().join("long.txt"), text).unwrap();
        fs::write(
            dir.path().join("manifest.csv"),
            "file,label\nlong.txt,1\nlong.txt,0\n",
        )
        .unwrap();
        let opts = LoadOptions {
            window: Some(8),
            stride: None,
        };
        let ds = load_cwru_format(dir.path(), opts).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.n_classes, 2);
        assert_eq!(ds.records[1].samples.data()[0], 8.0);
    }
}
