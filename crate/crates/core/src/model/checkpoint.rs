//! Checkpoints are UTF-8 JSON:
//!
//! ```json
//! {
//!   "format": "tdanet-checkpoint",
//!   "version": 1,
//!   "config": { ...ModelConfig... },
//!   "parameters": [ { "name": "sensor0.embed.weight", "shape": [32, 1, 1, 1], "values": [...] }, ... ]
//! }
//! ```
//!
//! Parameters appear in [`TdanetModel::parameter_names`] order. Values are
//! written in shortest round-trip form, so loading restores every `f64`
//! bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, TdanetModel};
use crate::error::{bail, Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "tdanet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    parameters: Vec<NamedParameter>,
}

#[derive(Serialize, Deserialize)]
struct NamedParameter {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn save_checkpoint(model: &TdanetModel, path: &Path) -> Result<()> {
    let parameters = model
        .parameter_names()
        .into_iter()
        .zip(model.parameters())
        .map(|(name, t)| NamedParameter {
            name,
            shape: t.shape().to_vec(),
            values: t.data().to_vec(),
        })
        .collect();
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        parameters,
    };
    let text = serde_json::to_string(&ckpt)
        .map_err(|e| Error::Data(format!("checkpoint encoding failed: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TdanetModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: malformed checkpoint: {e}", path.display())))?;
    if ckpt.format != CHECKPOINT_FORMAT {
        bail!(
            Data,
            "{}: not a checkpoint (format '{}')",
            path.display(),
            ckpt.format
        );
    }
    if ckpt.version != CHECKPOINT_VERSION {
        bail!(
            Data,
            "{}: unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            path.display(),
            ckpt.version
        );
    }
    let mut model = TdanetModel::new(ckpt.config, 0)?;
    let names = model.parameter_names();
    if names.len() != ckpt.parameters.len() {
        bail!(
            Data,
            "{}: checkpoint has {} parameters, config implies {}",
            path.display(),
            ckpt.parameters.len(),
            names.len()
        );
    }
    for ((slot, name), saved) in model
        .parameters_mut()
        .into_iter()
        .zip(&names)
        .zip(ckpt.parameters)
    {
        if saved.name != *name || saved.shape != slot.shape() {
            bail!(
                Data,
                "{}: parameter '{}' {:?} does not match expected '{name}' {:?}",
                path.display(),
                saved.name,
                saved.shape,
                slot.shape()
            );
        }
        *slot = Tensor::new(&saved.shape, saved.values)?.with_requires_grad(true);
    }
    Ok(model)
}
