//! From-scratch machine-learning blocks: an LSTM one-step-ahead signal
//! estimator trained with backpropagation through time, and a binary
//! logistic-regression classifier, plus dataset splitting/normalization
//! and a small binary model-file format.

pub mod dataset;
pub mod logreg;
pub mod lstm;
pub mod model_io;

use serde::{Deserialize, Serialize};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shared training hyperparameters for both ML blocks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Truncated-BPTT window length, in samples.
    pub seq_len: usize,
    /// Train/validation/test fractions; must sum to 1.
    pub split: (f64, f64, f64),
    pub seed: u64,
    /// Early-stopping patience, in epochs without validation improvement.
    pub patience: usize,
    /// L2 weight decay (used by the classifier).
    pub weight_decay: f64,
    /// Global gradient-norm clip for BPTT updates.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 400,
            learning_rate: 1e-3,
            seq_len: 200,
            split: (0.70, 0.15, 0.15),
            seed: 1,
            patience: 50,
            weight_decay: 1e-4,
            grad_clip: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        let (a, b, c) = self.split;
        if (a + b + c - 1.0).abs() > 1e-9 || a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(crate::error::Error::config(format!(
                "split fractions must be non-negative and sum to 1, got ({a}, {b}, {c})"
            )));
        }
        if self.max_epochs == 0 || self.seq_len < 2 {
            return Err(crate::error::Error::config(
                "training needs max_epochs >= 1 and seq_len >= 2",
            ));
        }
        Ok(())
    }
}
