//! Model file format: a versioned JSON document.
//!
//! Floats are written in shortest round-trip form, so saving the same
//! parameters always produces the same bytes and loading restores them
//! exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{ModelConfig, ModelParams};
use super::tensor::Matrix;
use super::train::TrainConfig;
use crate::rng::RNG_ALGORITHM;

pub const MODEL_FORMAT: &str = "dnfcount-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a model file (format `{0}`)")]
    Format(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngInfo {
    pub algorithm: String,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub rng: RngInfo,
    #[serde(default)]
    pub training: Option<TrainConfig>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams, init_seed: u64, training: Option<TrainConfig>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: params.config.clone(),
            rng: RngInfo {
                algorithm: RNG_ALGORITHM.into(),
                init_seed,
            },
            training,
            tensors: params
                .names
                .iter()
                .zip(&params.tensors)
                .map(|(name, m)| NamedTensor {
                    name: name.clone(),
                    rows: m.rows,
                    cols: m.cols,
                    data: m.data.clone(),
                })
                .collect(),
        }
    }

    pub fn into_params(self) -> Result<ModelParams, CheckpointError> {
        if self.format != MODEL_FORMAT {
            return Err(CheckpointError::Format(self.format));
        }
        if self.version != MODEL_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        let mut named = Vec::with_capacity(self.tensors.len());
        for t in self.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(CheckpointError::Shape(format!(
                    "tensor `{}` declares {}x{} but holds {} values",
                    t.name,
                    t.rows,
                    t.cols,
                    t.data.len()
                )));
            }
            named.push((t.name, Matrix::from_vec(t.rows, t.cols, t.data)));
        }
        ModelParams::from_tensors(self.config, named).map_err(CheckpointError::Shape)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_model(
    path: &Path,
    params: &ModelParams,
    init_seed: u64,
    training: Option<TrainConfig>,
) -> Result<(), CheckpointError> {
    std::fs::write(path, Checkpoint::from_params(params, init_seed, training).to_json())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams, CheckpointError> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)?.into_params()
}
