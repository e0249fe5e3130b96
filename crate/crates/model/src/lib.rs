//! Sequence-to-sequence generation over meaning representations.
//!
//! A model encodes up to four input streams (slot types, slot values, the
//! dialog act, and optionally the previous utterance) with per-stream
//! bidirectional GRUs, attends over the concatenated MR states with a
//! bilinear attention (plus a second, independent attention over the
//! utterance when enabled), and decodes with one GRU decoder per task.
//! Encoders and attentions are shared across tasks; each task owns its
//! decoder embedding, cell, and output projection.
//!
//! The crate covers configuration ([`ModelConfig`]), batching ([`Batch`]),
//! the network itself ([`NlgModel`]), greedy and beam decoding, and JSON
//! checkpoints ([`checkpoint`]).

pub mod checkpoint;

mod batch;
mod config;
mod decode;
mod net;

pub use batch::{Batch, StreamBatch, TargetBatch};
pub use config::{ModelConfig, Stream, UtteranceMode};
pub use decode::Hypothesis;
pub use net::{InstanceEncoding, NlgModel, StepOutput, TaskBound};
