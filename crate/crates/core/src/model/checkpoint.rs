use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{layout, CatGnnParams, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "catgnn-params";

#[derive(Serialize, Deserialize)]
struct Stored {
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    input_dim: usize,
    model_config: ModelConfig,
    params: BTreeMap<String, Stored>,
}

pub fn params_to_json(params: &CatGnnParams, config: &ModelConfig) -> Result<String> {
    params.check_config(config)?;
    let stored = params
        .names()
        .into_iter()
        .zip(params.tensors())
        .map(|(name, t)| {
            (
                name,
                Stored {
                    shape: [t.rows(), t.cols()],
                    values: t.data().to_vec(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        input_dim: params.input_dim(),
        model_config: config.clone(),
        params: stored,
    };
    Ok(serde_json::to_string(&file)?)
}

/// Parses a checkpoint and validates every tensor against the stored config.
pub fn params_from_json(json: &str) -> Result<(CatGnnParams, ModelConfig)> {
    let mut file: CheckpointFile = serde_json::from_str(json)?;
    if file.format != FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported checkpoint {} v{}",
            file.format, file.version
        )));
    }
    let config = file.model_config;
    config.validate()?;
    let expected = layout(file.input_dim, config.hidden_dim, config.num_heads, config.num_layers);
    let mut tensors = Vec::with_capacity(expected.len());
    for (name, (rows, cols)) in &expected {
        let stored = file
            .params
            .remove(name)
            .ok_or_else(|| Error::InvalidInput(format!("checkpoint is missing `{name}`")))?;
        if stored.shape != [*rows, *cols] {
            return Err(Error::shape(
                "load_checkpoint",
                format!("{name}: expected [{rows}, {cols}], found {:?}", stored.shape),
            ));
        }
        tensors.push(Tensor::from_vec(*rows, *cols, stored.values)?);
    }
    if let Some(extra) = file.params.keys().next() {
        return Err(Error::InvalidInput(format!("checkpoint has unexpected parameter `{extra}`")));
    }
    let params = CatGnnParams::from_tensors(file.input_dim, &config, tensors)?;
    Ok((params, config))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &CatGnnParams, config: &ModelConfig) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, params_to_json(params, config)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CatGnnParams, ModelConfig)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text)
}
