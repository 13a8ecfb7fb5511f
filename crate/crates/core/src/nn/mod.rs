//! Recurrent attention detector built on a small dense-algebra core.

mod attention;
mod gru;
mod model;
mod tensor;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::CheckpointError;

pub use attention::{attend, softmax, Attention, AttentionParams};
pub use gru::{gru_step, GruParams};
pub use model::{batch_loss, gradients, loss, AttentionModel, Example, ModelParams, Prediction};
pub use tensor::{axpy, dot, Tensor};
pub use train::{rmsprop_step, train, EpochLog, Rmsprop, TrainingLog};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty input")]
    EmptyInput,
    #[error("operation requires the {0} architecture")]
    Architecture(Architecture),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training or validation set is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("vocabulary hash {found:016x} does not match checkpoint {expected:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Bidirectional GRU with a softmax attention pool.
    #[default]
    BiAttention,
    /// Single forward GRU; its last state feeds the output layer.
    ForwardLast,
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bi_attention" => Ok(Architecture::BiAttention),
            "forward_last" => Ok(Architecture::ForwardLast),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::BiAttention => "bi_attention",
            Architecture::ForwardLast => "forward_last",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Per direction.
    pub hidden: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
    pub attention_l2_lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub architecture: Architecture,
    pub rng_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 200,
            hidden: 100,
            max_len: 150,
            dropout_rate: 0.1,
            attention_l2_lambda: 1e-4,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 20,
            architecture: Architecture::BiAttention,
            rng_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if self.embed_dim == 0 || self.hidden == 0 || self.max_len == 0 {
            return bad("embed_dim, hidden and max_len must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.attention_l2_lambda >= 0.0 && self.attention_l2_lambda.is_finite()) {
            return bad("attention_l2_lambda must be finite and nonnegative");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and nonnegative");
        }
        Ok(())
    }

    /// Width of the vector feeding the output layer.
    pub fn feature_dim(&self) -> usize {
        match self.architecture {
            Architecture::BiAttention => 2 * self.hidden,
            Architecture::ForwardLast => self.hidden,
        }
    }
}
