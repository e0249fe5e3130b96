//! End-to-end toolkit for generating natural-language answers from meaning
//! representations (dialog act + typed slots): data pipeline, recurrent
//! encoder-decoder models with attention, a deterministic training loop, and
//! slot-error-rate / BLEU evaluation.

pub mod data;
pub mod error;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
