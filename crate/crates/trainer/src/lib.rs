//! Training harness for the generation models: deterministic mini-batching,
//! Adam updates with optional gradient clipping, strict round-robin
//! multi-task scheduling, early stopping on dev loss, and run artifacts
//! (checkpoint directory + plain-text manifest).

mod batching;
mod checkpoint;
mod config;
mod history;
mod manifest;
mod run;

pub use batching::{make_batches, Example, TaskData};
pub use checkpoint::{checkpoint, restore, HISTORY_FILE, MODEL_FILE};
pub use config::TrainConfig;
pub use history::{EpochRecord, StopReason, TrainHistory};
pub use manifest::{fingerprint, fingerprint_examples, run_manifest, Manifest};
pub use run::{evaluate_loss, train, train_step};
