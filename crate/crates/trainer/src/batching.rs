//! Deterministic epoch batching.

use rand::seq::SliceRandom;

use nlgen_core::data::Instance;
use nlgen_core::rng;
use nlgen_core::{Error, Result};
use nlgen_model::{Batch, NlgModel};

/// One training pair: an instance and its already-delexicalized target text.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub instance: Instance,
    pub target: String,
}

/// Train and dev examples for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
}

/// Shuffle `data` deterministically by `(seed, epoch)` and cut it into
/// batches of at most `batch_size`. Every example appears exactly once.
pub fn make_batches(
    model: &NlgModel,
    task: &str,
    data: &[Example],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Batch>> {
    if data.is_empty() {
        return Err(Error::contract(format!("no training examples for task {task:?}")));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::derive(seed, epoch as u64));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let pairs: Vec<(&Instance, &str)> = chunk
                .iter()
                .map(|&i| (&data[i].instance, data[i].target.as_str()))
                .collect();
            model.make_batch(task, &pairs)
        })
        .collect()
}
