//! Noisy-signal fault diagnosis built on period decomposition.
//!
//! A 1D multi-channel signal is decomposed into its most salient periods,
//! each period is folded into a 2D map, and a small convolutional network
//! with gated denoising blocks and attention fusion classifies the result.
//!
//! * [`numerics`]: tensors, reverse-mode tape, Adam, precision modes.
//! * [`spectral`]: FFT/STFT amplitudes, top-k periods, 1D↔2D folding.
//! * [`model`]: the network and its checkpoint format.
//! * [`data`]: datasets, normalization, noise injection, synthetic generators.
//! * [`metrics`]: confusion matrices and macro metrics.
//! * [`training`]: training/evaluation loops and ablation sweeps.

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
