//! Corpus BLEU-4 with multi-reference clipping, closest-reference brevity
//! penalty, and no smoothing: clipped n-gram counts are summed over the whole
//! corpus before the precisions are formed, so permuting or duplicating
//! instances cannot change the score.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use nlgen_core::data::split_tokens;
use nlgen_core::{Error, Result};

const MAX_N: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// BP · exp(¼ Σ ln pₙ), or 0 when any pₙ is 0.
    pub score: f64,
    /// Modified n-gram precisions p₁..p₄.
    pub precisions: [f64; MAX_N],
    pub brevity_penalty: f64,
    /// Total hypothesis token count.
    pub hyp_len: usize,
    /// Sum of closest-reference lengths (ties resolved to the shorter).
    pub ref_len: usize,
    pub matched: [usize; MAX_N],
    pub total: [usize; MAX_N],
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 over one hypothesis per instance and a nonempty reference
/// set per instance.
pub fn bleu(hypotheses: &[String], reference_sets: &[Vec<String>]) -> Result<BleuReport> {
    if hypotheses.len() != reference_sets.len() {
        return Err(Error::contract(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            reference_sets.len()
        )));
    }
    let mut matched = [0usize; MAX_N];
    let mut total = [0usize; MAX_N];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;

    for (hyp, refs) in hypotheses.iter().zip(reference_sets) {
        if refs.is_empty() {
            return Err(Error::contract("empty reference set"));
        }
        let hyp_tokens = split_tokens(hyp);
        let ref_tokens: Vec<Vec<&str>> = refs.iter().map(|r| split_tokens(r)).collect();

        hyp_len += hyp_tokens.len();
        ref_len += ref_tokens
            .iter()
            .map(|r| r.len())
            .min_by_key(|&len| {
                let diff = (len as i64 - hyp_tokens.len() as i64).unsigned_abs();
                (diff, len)
            })
            .unwrap();

        for n in 1..=MAX_N {
            let hyp_counts = ngram_counts(&hyp_tokens, n);
            total[n - 1] += hyp_tokens.len().saturating_sub(n - 1);
            for (gram, count) in hyp_counts {
                let max_ref = ref_tokens
                    .iter()
                    .map(|r| ngram_counts(r, n).get(&gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                matched[n - 1] += count.min(max_ref);
            }
        }
    }

    let mut precisions = [0.0f64; MAX_N];
    for n in 0..MAX_N {
        if total[n] > 0 {
            precisions[n] = matched[n] as f64 / total[n] as f64;
        }
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let score = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        brevity_penalty * (precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_N as f64).exp()
    };
    Ok(BleuReport {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
        matched,
        total,
    })
}
