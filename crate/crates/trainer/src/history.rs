//! Per-epoch training records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0-based epoch index.
    pub epoch: usize,
    /// Mean training loss per task over the batches it consumed.
    pub train_loss: BTreeMap<String, f64>,
    /// Token-weighted dev loss per task; empty on epochs without evaluation.
    pub dev_loss: BTreeMap<String, f64>,
    /// Unweighted mean of the per-task dev losses.
    pub val_loss: Option<f64>,
    /// Batches consumed per task (smaller tasks cycle, so counts match).
    pub batches: BTreeMap<String, usize>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the restored best-validation snapshot.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    /// The smallest validation loss on record.
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs
            .iter()
            .filter_map(|e| e.val_loss)
            .min_by(|a, b| a.total_cmp(b))
    }
}
