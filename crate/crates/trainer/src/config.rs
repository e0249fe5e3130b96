//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use nlgen_core::{Error, Result};

/// Knobs for the training loop. Defaults follow the usual small-corpus
/// recipe: batches of 32, Adam at 0.001, up to 1000 epochs with early
/// stopping on validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Evaluated epochs without a validation improvement of at least
    /// `min_delta` before training stops.
    pub patience: usize,
    pub min_delta: f64,
    /// Validate every this many epochs.
    pub eval_every: usize,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            max_epochs: 1000,
            learning_rate: 0.001,
            patience: 20,
            min_delta: 1e-5,
            eval_every: 1,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be positive"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::config("min_delta must be non-negative"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("clip_norm must be positive when set"));
            }
        }
        Ok(())
    }
}
