//! Dense numeric core with reverse-mode automatic differentiation.
//!
//! Trainable matrices and vectors live in a [`ParamSet`]; a [`Tape`] records
//! vector-valued operations during the forward pass and replays them in
//! reverse to accumulate exact gradients into the parameter store. LSTM and
//! binary tree-LSTM cells are composed from the primitive operations, so one
//! backward pass covers the whole model.
//!
//! All arithmetic is 64-bit, single-threaded per tape, and deterministic;
//! gradients from independent tapes merge by summation into the shared
//! accumulators.

mod cell;
mod optim;
mod params;
mod tape;
mod tensor;

pub use cell::{lstm_cell, tree_lstm_cell, CellState, LstmParams, TreeLstmParams};
pub use optim::{clip_and_step, global_grad_norm, LrSchedule};
pub use params::{ParamId, ParamSet, ParamTensor};
pub use tape::{Tape, ValueId};
pub use tensor::TensorValue;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from tensor construction, tape recording, or backpropagation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("index {index} out of range for length {len} in {op}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("invalid graph: {reason}")]
    Graph { reason: String },
}

/// Whether dropout masks are sampled (training) or skipped (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Training,
    Inference,
}

/// Training hyperparameters with their standard defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    /// Initial learning rate.
    pub lr0: f64,
    /// Multiplicative decay applied when the validation loss plateaus.
    pub lr_decay: f64,
    /// Plateau length in mini-batches before a decay fires.
    pub plateau_window: u64,
    /// Development loss is measured every this many mini-batches.
    pub eval_every: u64,
    pub dropout: f64,
    /// Global gradient-norm clip threshold.
    pub grad_clip: f64,
    /// Parameters initialize uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 100,
            layers: 1,
            hidden_dim: 256,
            embedding_dim: 256,
            lr0: 0.005,
            lr_decay: 0.8,
            plateau_window: 500,
            eval_every: 500,
            dropout: 0.5,
            grad_clip: 5.0,
            init_range: 0.1,
            epochs: 30,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Checks field ranges.
    pub fn validate(&self) -> Result<(), DiffError> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("layers", self.layers as f64),
            ("hidden_dim", self.hidden_dim as f64),
            ("embedding_dim", self.embedding_dim as f64),
            ("lr0", self.lr0),
            ("lr_decay", self.lr_decay),
            ("plateau_window", self.plateau_window as f64),
            ("eval_every", self.eval_every as f64),
            ("grad_clip", self.grad_clip),
            ("epochs", self.epochs as f64),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(DiffError::Graph {
                    reason: format!("hyperparameter {name} must be positive"),
                });
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DiffError::Graph {
                reason: "dropout must lie in [0, 1)".to_owned(),
            });
        }
        if self.init_range <= 0.0 {
            return Err(DiffError::Graph {
                reason: "init_range must be positive".to_owned(),
            });
        }
        Ok(())
    }
}
