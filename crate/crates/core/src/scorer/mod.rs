//! Geometric-vector-perceptron residue-identity scorer.
//!
//! Maps a masked atomic environment to 20 amino-acid logits. Node and edge
//! features carry both scalar channels and 3-vector channels; every layer
//! only mixes vector channels linearly, takes their norms, or scales them by
//! scalar gates, so the logits are invariant to rigid motions of the input
//! and the intermediate vector channels rotate with it.

mod checkpoint;
mod features;
mod model;
pub mod tape;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use features::{featurize, rbf_expand, Features, ELEMENT_CLASSES, NODE_INPUT_DIM};
pub use model::{forward, forward_trace, loss_and_grad, LayerTrace, ScorerParams};
pub use train::{evaluate_accuracy, train_res, EpochMetrics, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structio::{AminoAcid, StructError};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("masked graph has no atoms")]
    EmptyGraph,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Structure(#[from] StructError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Layer widths of the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub node_scalar_dim: usize,
    pub node_vector_dim: usize,
    pub edge_scalar_dim: usize,
    pub edge_vector_dim: usize,
    pub hidden_out_dim: usize,
    pub num_layers: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            node_scalar_dim: 100,
            node_vector_dim: 16,
            edge_scalar_dim: 32,
            edge_vector_dim: 1,
            hidden_out_dim: 100,
            num_layers: 5,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let dims = [
            self.node_scalar_dim,
            self.node_vector_dim,
            self.edge_scalar_dim,
            self.edge_vector_dim,
            self.hidden_out_dim,
            self.num_layers,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(ScorerError::Config(format!("all feature dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub scheduler_patience: usize,
    pub decay_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            scheduler_patience: 10,
            decay_rate: 0.75,
            dropout: 0.1,
            batch_size: 64,
            epochs: 40,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Twenty logits indexed by [`AminoAcid::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: [f64; 20],
}

impl ScoreVector {
    /// Highest-scoring amino acid; ties go to the lowest index.
    pub fn argmax(&self) -> AminoAcid {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = i;
            }
        }
        AminoAcid::from_index(best).expect("index < 20")
    }

    pub fn softmax(&self) -> [f64; 20] {
        let max = self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = [0.0; 20];
        let mut sum = 0.0;
        for (o, &s) in out.iter_mut().zip(&self.scores) {
            *o = (s - max).exp();
            sum += *o;
        }
        out.iter_mut().for_each(|o| *o /= sum);
        out
    }

    /// Cross-entropy of the softmax against `label`.
    pub fn cross_entropy(&self, label: AminoAcid) -> f64 {
        let max = self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = self.scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
        lse - self.scores[label.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.scores.iter().all(|s| s.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_training_table() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.scheduler_patience, 10);
        assert_eq!(c.decay_rate, 0.75);
        assert_eq!(c.dropout, 0.1);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.epochs, 40);
        let s = FeatureSpec::default();
        assert_eq!((s.node_scalar_dim, s.node_vector_dim), (100, 16));
        assert_eq!((s.edge_scalar_dim, s.edge_vector_dim), (32, 1));
        assert_eq!(s.num_layers, 5);
    }

    #[test]
    fn uniform_logits_give_log_twenty() {
        let v = ScoreVector { scores: [0.3; 20] };
        assert!((v.cross_entropy(AminoAcid::from_index(7).unwrap()) - 20f64.ln()).abs() < 1e-12);
        assert!((20f64.ln() - 2.9957).abs() < 1e-4);
        assert_eq!(v.argmax().index(), 0, "ties resolve to the lowest index");
    }

    #[test]
    fn zero_dimension_rejected() {
        let spec = FeatureSpec { node_vector_dim: 0, ..FeatureSpec::default() };
        assert!(spec.validate().is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(scores in proptest::array::uniform20(-50.0f64..50.0)) {
            let v = ScoreVector { scores };
            let total: f64 = v.softmax().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
