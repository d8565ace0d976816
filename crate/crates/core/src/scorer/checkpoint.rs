//! Checkpoint container.
//!
//! A JSON object:
//!
//! ```text
//! {
//!   "format": "varscore-checkpoint",
//!   "version": 1,
//!   "feature_spec": { node_scalar_dim, node_vector_dim, edge_scalar_dim,
//!                     edge_vector_dim, hidden_out_dim, num_layers },
//!   "train_config": { ... } | null,
//!   "tensors": [ { "name": "embed.w", "rows": 7, "cols": 100, "data": [...] }, ... ]
//! }
//! ```
//!
//! Tensor data is row-major. Floats are written in shortest round-trip form
//! and parsed exactly, so save/load is bit-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::ScorerParams;
use super::tape::Tensor;
use super::{FeatureSpec, ScorerError, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "varscore-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ScorerParams,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    feature_spec: FeatureSpec,
    train_config: Option<TrainConfig>,
    tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(params: ScorerParams, train_config: Option<TrainConfig>) -> Self {
        Checkpoint { params, train_config }
    }

    pub fn to_json(&self) -> Result<String, ScorerError> {
        let container = Container {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            feature_spec: self.params.spec,
            train_config: self.train_config.clone(),
            tensors: self
                .params
                .names
                .iter()
                .zip(&self.params.tensors)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    data: t.data.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&container)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerError> {
        let c: Container = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(ScorerError::Checkpoint(format!("unexpected format tag '{}'", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(ScorerError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        let mut names = Vec::with_capacity(c.tensors.len());
        let mut tensors = Vec::with_capacity(c.tensors.len());
        for t in c.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(ScorerError::Checkpoint(format!("tensor {} has {} values for shape {}x{}", t.name, t.data.len(), t.rows, t.cols)));
            }
            names.push(t.name);
            tensors.push(Tensor::from_vec(t.rows, t.cols, t.data));
        }
        let params = ScorerParams {
            spec: c.feature_spec,
            names,
            tensors,
        };
        params.validate()?;
        Ok(Checkpoint {
            params,
            train_config: c.train_config,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn id(&self) -> Result<String, ScorerError> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), ScorerError> {
    std::fs::write(path, checkpoint.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ScorerError> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)
}
