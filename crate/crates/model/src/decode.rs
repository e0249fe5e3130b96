//! Greedy and beam-search decoding.
//!
//! Scores are mean token log-probabilities: the sum over emitted tokens
//! (including the closing EOS when one was produced) divided by the number
//! of emissions. Beam pruning uses raw log-probability sums; length
//! normalization applies only when a hypothesis retires. The greedy
//! hypothesis is always added to the completed pool, so the top beam result
//! never scores below greedy.

use std::collections::BTreeMap;

use nlgen_core::data::{Instance, BOS, EOS};
use nlgen_core::tensor::{Graph, TensorId};
use nlgen_core::{Error, Result};

use crate::config::Stream;
use crate::net::{InstanceEncoding, NlgModel, TaskBound};

/// A finished decode: emitted ids (EOS kept when produced), their surface
/// tokens (EOS dropped), and the mean token log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub token_ids: Vec<u32>,
    pub tokens: Vec<String>,
    pub score: f64,
}

impl Hypothesis {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

/// Argmax with ties resolved to the lowest id.
fn best_token(log_probs: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &x) in log_probs.iter().enumerate() {
        if x > log_probs[best] {
            best = i;
        }
    }
    best as u32
}

struct Partial {
    ids: Vec<u32>,
    sum: f64,
    h: TensorId,
    prev: u32,
}

fn finish(model: &NlgModel, task: &str, ids: Vec<u32>, sum: f64) -> Result<Hypothesis> {
    let vocab = model.target_vocab(task)?;
    let score = sum / ids.len() as f64;
    let surface: Result<Vec<String>> = ids
        .iter()
        .filter(|&&id| id != EOS)
        .map(|&id| vocab.token(id).map(|t| t.to_string()))
        .collect();
    Ok(Hypothesis {
        token_ids: ids,
        tokens: surface?,
        score,
    })
}

/// Greedy rollout inside an existing graph. Returns (ids, log-prob sum).
fn greedy_rollout(
    g: &mut Graph,
    bound: &TaskBound,
    enc: &InstanceEncoding,
    max_len: usize,
) -> Result<(Vec<u32>, f64)> {
    let mut h = enc.h0;
    let mut prev = BOS;
    let mut ids = Vec::new();
    let mut sum = 0.0;
    for _ in 0..max_len {
        let (logits, h_next) = bound.decoder_step(g, prev, h, enc)?;
        let lp = log_softmax(&g.value(logits).data);
        let tok = best_token(&lp);
        sum += lp[tok as usize];
        ids.push(tok);
        h = h_next;
        prev = tok;
        if tok == EOS {
            break;
        }
    }
    Ok((ids, sum))
}

impl NlgModel {
    fn encode_for_decode(
        &self,
        g: &mut Graph,
        task: &str,
        inst: &Instance,
    ) -> Result<(TaskBound, InstanceEncoding)> {
        let bound = self.bind_task(g, task)?;
        let inputs: BTreeMap<Stream, Vec<u32>> = self.render_streams(inst)?;
        let enc = bound.encode_example(g, &inputs)?;
        Ok((bound, enc))
    }

    /// Decode one instance greedily.
    pub fn decode_greedy(&self, task: &str, inst: &Instance) -> Result<Hypothesis> {
        let mut g = Graph::new();
        let (bound, enc) = self.encode_for_decode(&mut g, task, inst)?;
        let max_len = self.config().max_decode_len;
        let (ids, sum) = greedy_rollout(&mut g, &bound, &enc, max_len)?;
        finish(self, task, ids, sum)
    }

    /// Beam-search decode one instance. Hypotheses come back sorted by score
    /// (ties by lower token ids); the greedy result is always in the pool.
    pub fn decode_beam(&self, task: &str, inst: &Instance, beam_width: usize) -> Result<Vec<Hypothesis>> {
        if beam_width == 0 {
            return Err(Error::contract("beam width must be at least 1".to_string()));
        }
        let mut g = Graph::new();
        let (bound, enc) = self.encode_for_decode(&mut g, task, inst)?;
        let max_len = self.config().max_decode_len;

        let mut actives = vec![Partial {
            ids: Vec::new(),
            sum: 0.0,
            h: enc.h0,
            prev: BOS,
        }];
        // ids, raw sum (length normalization happens in finish()).
        let mut completed: Vec<(Vec<u32>, f64)> = Vec::new();

        for _ in 0..max_len {
            if actives.is_empty() {
                break;
            }
            let mut expansions: Vec<Partial> = Vec::new();
            for a in &actives {
                let (logits, h_next) = bound.decoder_step(&mut g, a.prev, a.h, &enc)?;
                let lp = log_softmax(&g.value(logits).data);
                let mut order: Vec<u32> = (0..lp.len() as u32).collect();
                order.sort_by(|&x, &y| {
                    lp[y as usize]
                        .total_cmp(&lp[x as usize])
                        .then_with(|| x.cmp(&y))
                });
                for &tok in order.iter().take(beam_width) {
                    let mut ids = a.ids.clone();
                    ids.push(tok);
                    expansions.push(Partial {
                        ids,
                        sum: a.sum + lp[tok as usize],
                        h: h_next,
                        prev: tok,
                    });
                }
            }
            expansions.sort_by(|x, y| y.sum.total_cmp(&x.sum).then_with(|| x.ids.cmp(&y.ids)));
            expansions.truncate(beam_width);
            actives = Vec::new();
            for e in expansions {
                if e.prev == EOS {
                    completed.push((e.ids, e.sum));
                } else {
                    actives.push(e);
                }
            }
        }
        for a in actives {
            completed.push((a.ids, a.sum));
        }

        let (greedy_ids, greedy_sum) = greedy_rollout(&mut g, &bound, &enc, max_len)?;
        if !completed.iter().any(|(ids, _)| *ids == greedy_ids) {
            completed.push((greedy_ids, greedy_sum));
        }

        let mut out: Vec<Hypothesis> = completed
            .into_iter()
            .map(|(ids, sum)| finish(self, task, ids, sum))
            .collect::<Result<_>>()?;
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.token_ids.cmp(&b.token_ids))
        });
        Ok(out)
    }
}
