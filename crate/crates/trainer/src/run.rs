//! The training loop: strict round-robin multi-task scheduling, Adam with
//! optional global-norm clipping, and early stopping on the unweighted mean
//! of per-task dev losses. The best-validation snapshot is restored into the
//! model when training ends.

use std::collections::BTreeMap;
use std::time::Instant;

use nlgen_core::nn::{clip_global_norm, AdamConfig, AdamState};
use nlgen_core::tensor::Graph;
use nlgen_core::{Error, Result};
use nlgen_model::{Batch, NlgModel};

use crate::batching::{make_batches, TaskData};
use crate::config::TrainConfig;
use crate::history::{EpochRecord, StopReason, TrainHistory};
use crate::Example;

/// One optimizer update on one batch. Returns the batch's token-mean loss
/// (from before the update).
pub fn train_step(
    model: &mut NlgModel,
    adam: &mut AdamState,
    batch: &Batch,
    clip_norm: Option<f64>,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = model.bind_task(&mut g, &batch.task)?;
    let loss = bound.forward_loss(&mut g, batch)?;
    let loss_value = g.value(loss).data[0];
    if !loss_value.is_finite() {
        return Err(Error::contract(format!(
            "non-finite training loss {loss_value} on task {:?}",
            batch.task
        )));
    }
    g.backward(loss)?;
    let mut grads: Vec<(String, Vec<f64>)> = bound
        .leaves()
        .into_iter()
        .map(|(name, id)| {
            let grad = g
                .grad(id)
                .ok_or_else(|| Error::contract(format!("no gradient for parameter {name}")))?;
            Ok((name, grad.to_vec()))
        })
        .collect::<Result<_>>()?;
    drop(g);

    if let Some(max_norm) = clip_norm {
        clip_global_norm(&mut grads, max_norm);
    }
    let mut params: BTreeMap<String, &mut nlgen_core::tensor::Tensor> =
        model.params_mut().into_iter().collect();
    for (name, grad) in &grads {
        let param = params
            .get_mut(name)
            .ok_or_else(|| Error::contract(format!("gradient for unknown parameter {name}")))?;
        adam.step(name, param, grad)?;
    }
    Ok(loss_value)
}

/// Token-weighted mean cross-entropy over a dataset, without updates. The
/// result is independent of `batch_size` up to floating-point reassociation.
pub fn evaluate_loss(
    model: &NlgModel,
    task: &str,
    data: &[Example],
    batch_size: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract(format!("no evaluation examples for task {task:?}")));
    }
    let mut weighted = 0.0;
    let mut tokens = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let pairs: Vec<_> = chunk
            .iter()
            .map(|e| (&e.instance, e.target.as_str()))
            .collect();
        let batch = model.make_batch(task, &pairs)?;
        let n = batch.target_tokens();
        weighted += model.loss_value(&batch)? * n as f64;
        tokens += n;
    }
    Ok(weighted / tokens as f64)
}

/// Train `model` on `datasets` (one entry per model task; extras are
/// ignored). Tasks alternate strictly in the model's task order each step;
/// a task with fewer batches cycles from its reshuffled start, so per-epoch
/// consumption counts are equal across tasks. After the final epoch the
/// best-validation snapshot is restored into `model`.
pub fn train(
    model: &mut NlgModel,
    datasets: &BTreeMap<String, TaskData>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let tasks = model.config().tasks.clone();
    for task in &tasks {
        let data = datasets
            .get(task)
            .ok_or_else(|| Error::contract(format!("no dataset for task {task:?}")))?;
        if data.train.is_empty() {
            return Err(Error::contract(format!("no training examples for task {task:?}")));
        }
        if data.dev.is_empty() {
            return Err(Error::contract(format!("empty dev set for task {task:?}")));
        }
    }

    let mut adam = AdamState::new(AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: None,
        stop_reason: StopReason::MaxEpochs,
    };
    // Best snapshot updates on any strict improvement; the patience counter
    // resets only on improvements of at least min_delta.
    let mut best: Option<(f64, NlgModel, usize)> = None;
    let mut stalled = 0usize;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        let per_task: Vec<Vec<Batch>> = tasks
            .iter()
            .enumerate()
            .map(|(ti, task)| {
                make_batches(
                    model,
                    task,
                    &datasets[task].train,
                    config.batch_size,
                    config.seed.wrapping_add(ti as u64),
                    epoch,
                )
            })
            .collect::<Result<_>>()?;
        let steps = per_task.iter().map(Vec::len).max().unwrap_or(0);

        let mut sums: BTreeMap<String, f64> = tasks.iter().map(|t| (t.clone(), 0.0)).collect();
        for step in 0..steps {
            for (ti, task) in tasks.iter().enumerate() {
                let batch = &per_task[ti][step % per_task[ti].len()];
                let loss = train_step(model, &mut adam, batch, config.clip_norm)?;
                *sums.get_mut(task).unwrap() += loss;
            }
        }
        let train_loss: BTreeMap<String, f64> = sums
            .into_iter()
            .map(|(t, s)| (t, s / steps as f64))
            .collect();
        let batches: BTreeMap<String, usize> = tasks.iter().map(|t| (t.clone(), steps)).collect();

        let evaluate = (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.max_epochs;
        let (dev_loss, val_loss) = if evaluate {
            let mut per = BTreeMap::new();
            for task in &tasks {
                per.insert(
                    task.clone(),
                    evaluate_loss(model, task, &datasets[task].dev, config.batch_size)?,
                );
            }
            let val = per.values().sum::<f64>() / per.len() as f64;
            (per, Some(val))
        } else {
            (BTreeMap::new(), None)
        };

        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            val_loss,
            batches,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        if let Some(val) = val_loss {
            let improved_any = best.as_ref().is_none_or(|(bv, _, _)| val < *bv);
            let improved_enough = best.as_ref().is_none_or(|(bv, _, _)| val < bv - config.min_delta);
            if improved_any {
                best = Some((val, model.clone(), epoch));
            }
            if improved_enough {
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= config.patience {
                    history.stop_reason = StopReason::Patience;
                    break;
                }
            }
        }
    }

    if let Some((_, best_model, idx)) = best {
        *model = best_model;
        history.best_epoch = Some(idx);
    }
    Ok(history)
}
