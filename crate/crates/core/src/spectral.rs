//! Period decomposition of multi-channel signals and the 1D↔2D folding used
//! to expose intra-period and inter-period variation to 2D convolutions.
//!
//! Signals are `[T×C]` tensors (time-major). Amplitude spectra cover the
//! frequency bins `1..=⌊T/2⌋`; the DC bin is never a candidate period.

use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionMethod {
    Fft,
    #[default]
    Stft,
}

impl DecompositionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DecompositionMethod::Fft => "fft",
            DecompositionMethod::Stft => "stft",
        }
    }
}

impl FromStr for DecompositionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fft" => Ok(Self::Fft),
            "stft" => Ok(Self::Stft),
            other => bail!(
                Config,
                "unknown decomposition '{other}' (expected fft or stft)"
            ),
        }
    }
}

impl std::fmt::Display for DecompositionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFunction {
    #[default]
    Hann,
    Rectangular,
}

impl WindowFunction {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowFunction::Rectangular => vec![1.0; n],
            WindowFunction::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

impl FromStr for WindowFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Self::Hann),
            "rectangular" => Ok(Self::Rectangular),
            other => bail!(
                Config,
                "unknown window '{other}' (expected hann or rectangular)"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub window: WindowFunction,
}

impl StftConfig {
    pub fn new(window_length: usize, hop: usize, window: WindowFunction) -> Result<Self> {
        if window_length < 2 {
            bail!(
                Config,
                "STFT window length must be at least 2, got {window_length}"
            );
        }
        if hop == 0 || hop > window_length {
            bail!(
                Config,
                "STFT hop must lie in 1..={window_length}, got {hop}"
            );
        }
        Ok(Self {
            window_length,
            hop,
            window,
        })
    }

    /// Hann window of the largest power of two not above `T/4` (at least 2),
    /// with 50% overlap.
    pub fn for_length(signal_length: usize) -> Self {
        let target = (signal_length / 4).max(2);
        let mut w = 2;
        while w * 2 <= target {
            w *= 2;
        }
        let w = w.min(signal_length.max(2));
        Self {
            window_length: w,
            hop: (w / 2).max(1),
            window: WindowFunction::Hann,
        }
    }
}

/// Channel-averaged amplitudes over frequency bins `1..=⌊T/2⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpectrum {
    signal_length: usize,
    values: Vec<f64>,
}

impl AmplitudeSpectrum {
    /// `values[i]` is the amplitude of frequency bin `i + 1`.
    pub fn new(signal_length: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != signal_length / 2 {
            bail!(
                Dimension,
                "spectrum of a length-{signal_length} signal needs {} bins, got {}",
                signal_length / 2,
                values.len()
            );
        }
        Ok(Self {
            signal_length,
            values,
        })
    }

    pub fn signal_length(&self) -> usize {
        self.signal_length
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Amplitude at frequency bin `f` (1-based).
    pub fn at(&self, frequency: usize) -> f64 {
        self.values[frequency - 1]
    }

    /// Bin with the largest amplitude; ties go to the lower frequency.
    pub fn dominant_frequency(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDecomposition {
    pub frequencies: Vec<usize>,
    pub periods: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub method: DecompositionMethod,
    pub signal_length: usize,
}

impl PeriodDecomposition {
    pub fn k(&self) -> usize {
        self.frequencies.len()
    }
}

/// One period's folded view of a signal: `[C × p × f]`, column `c` holding
/// samples `c·p .. c·p + p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Period2DTensor {
    pub data: Tensor,
    pub source_frequency: usize,
    pub valid_length: usize,
}

impl Period2DTensor {
    pub fn period(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn frequency_columns(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }
}

fn signal_dims(signal: &Tensor) -> Result<(usize, usize)> {
    match signal.shape() {
        [t, c] => Ok((*t, *c)),
        s => bail!(Dimension, "signals must be [T×C], got shape {s:?}"),
    }
}

fn check_length(t: usize) -> Result<()> {
    if t < 4 {
        bail!(Data, "signal length {t} is below the minimum of 4 samples");
    }
    Ok(())
}

/// `|X_f|` of the full-length DFT for `f = 1..=⌊T/2⌋`, averaged over channels.
pub fn dft_amplitudes(signal: &Tensor) -> Result<AmplitudeSpectrum> {
    let (t, c) = signal_dims(signal)?;
    check_length(t)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(t);
    let half = t / 2;
    let mut avg = vec![0.0; half];
    let mut buf = vec![Complex::new(0.0, 0.0); t];
    let data = signal.data();
    for ch in 0..c {
        for (i, z) in buf.iter_mut().enumerate() {
            *z = Complex::new(data[i * c + ch], 0.0);
        }
        fft.process(&mut buf);
        for (f, a) in avg.iter_mut().enumerate() {
            *a += buf[f + 1].norm();
        }
    }
    avg.iter_mut().for_each(|a| *a /= c as f64);
    AmplitudeSpectrum::new(t, avg)
}

/// Frame-averaged, channel-averaged STFT magnitudes mapped onto the global
/// bins `1..=⌊T/2⌋`. Window bin `b` lands on `round(b·T/W)`; collisions keep
/// the larger amplitude and unmapped bins are zero.
pub fn stft_amplitudes(signal: &Tensor, cfg: &StftConfig) -> Result<AmplitudeSpectrum> {
    let (t, c) = signal_dims(signal)?;
    check_length(t)?;
    let w = cfg.window_length;
    if w > t {
        bail!(Config, "STFT window {w} exceeds signal length {t}");
    }
    StftConfig::new(w, cfg.hop, cfg.window)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(w);
    let coeffs = cfg.window.coefficients(w);
    let frames = (t - w) / cfg.hop + 1;
    let local_bins = w / 2;
    let mut local = vec![0.0; local_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); w];
    let data = signal.data();
    for frame in 0..frames {
        let start = frame * cfg.hop;
        for ch in 0..c {
            for (i, z) in buf.iter_mut().enumerate() {
                *z = Complex::new(data[(start + i) * c + ch] * coeffs[i], 0.0);
            }
            fft.process(&mut buf);
            for (b, a) in local.iter_mut().enumerate() {
                *a += buf[b + 1].norm();
            }
        }
    }
    let scale = 1.0 / (frames * c) as f64;
    let half = t / 2;
    let mut global = vec![0.0; half];
    for (b0, a) in local.iter().enumerate() {
        let b = b0 + 1;
        let f = ((b * t) as f64 / w as f64).round() as usize;
        let f = f.clamp(1, half);
        let amp = a * scale;
        if amp > global[f - 1] {
            global[f - 1] = amp;
        }
    }
    AmplitudeSpectrum::new(t, global)
}

/// The `k` strongest distinct bins (ties toward the lower frequency) and
/// their periods `⌊T/f⌋`.
pub fn top_k_periods(
    spectrum: &AmplitudeSpectrum,
    k: usize,
    method: DecompositionMethod,
) -> Result<PeriodDecomposition> {
    let t = spectrum.signal_length();
    let half = t / 2;
    if k == 0 || k > half {
        bail!(
            Config,
            "k must lie in 1..={half} for a length-{t} signal, got {k}"
        );
    }
    let values = spectrum.values();
    let mut order: Vec<usize> = (0..half).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let frequencies: Vec<usize> = order[..k].iter().map(|i| i + 1).collect();
    Ok(PeriodDecomposition {
        periods: frequencies.iter().map(|f| t / f).collect(),
        amplitudes: order[..k].iter().map(|&i| values[i]).collect(),
        frequencies,
        method,
        signal_length: t,
    })
}

/// Amplitude spectrum of `signal` under `method`, using `stft` when given or
/// the length-derived default otherwise.
pub fn amplitudes(
    signal: &Tensor,
    method: DecompositionMethod,
    stft: Option<&StftConfig>,
) -> Result<AmplitudeSpectrum> {
    match method {
        DecompositionMethod::Fft => dft_amplitudes(signal),
        DecompositionMethod::Stft => {
            let (t, _) = signal_dims(signal)?;
            let cfg = stft.copied().unwrap_or_else(|| StftConfig::for_length(t));
            stft_amplitudes(signal, &cfg)
        }
    }
}

pub fn decompose(
    signal: &Tensor,
    method: DecompositionMethod,
    stft: Option<&StftConfig>,
    k: usize,
) -> Result<PeriodDecomposition> {
    top_k_periods(&amplitudes(signal, method, stft)?, k, method)
}

/// Folds the first `min(T, p·f)` samples into `[C × p × f]`, one period per
/// column, zero-padding any unfilled tail.
pub fn reshape_to_2d(signal: &Tensor, period: usize, frequency: usize) -> Result<Period2DTensor> {
    let (t, c) = signal_dims(signal)?;
    if period == 0 || frequency == 0 {
        bail!(
            Config,
            "period and frequency must be positive, got {period} and {frequency}"
        );
    }
    let cells = period * frequency;
    let valid = t.min(cells);
    let src = signal.data();
    let mut out = vec![0.0; c * cells];
    for col in 0..frequency {
        for row in 0..period {
            let s = col * period + row;
            if s >= valid {
                break;
            }
            for ch in 0..c {
                out[ch * cells + row * frequency + col] = src[s * c + ch];
            }
        }
    }
    Ok(Period2DTensor {
        data: Tensor::from_parts(vec![c, period, frequency], out),
        source_frequency: frequency,
        valid_length: valid,
    })
}

/// Inverse of [`reshape_to_2d`] on the valid region: `[valid_length × C]`.
pub fn flatten_from_2d(folded: &Period2DTensor) -> Tensor {
    let (c, p, f) = (
        folded.channels(),
        folded.period(),
        folded.frequency_columns(),
    );
    let cells = p * f;
    let src = folded.data.data();
    let mut out = vec![0.0; folded.valid_length * c];
    for s in 0..folded.valid_length {
        let (col, row) = (s / p, s % p);
        for ch in 0..c {
            out[s * c + ch] = src[ch * cells + row * f + col];
        }
    }
    Tensor::from_parts(vec![folded.valid_length, c], out)
}
