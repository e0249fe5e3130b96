//! Padded id batches. Storage is rectangular per stream (PAD-filled), with
//! true lengths kept alongside; the forward pass walks each row at its exact
//! length, so padding never leaks into the math.

use std::collections::BTreeMap;

use nlgen_core::data::PAD;
use nlgen_core::{Error, Result};

use crate::config::Stream;

/// One padded input stream: `ids[r]` all share the batch maximum length,
/// `lengths[r]` is row r's true length (always ≥ 1; empty inputs are encoded
/// as a single PAD token).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamBatch {
    pub ids: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
}

impl StreamBatch {
    pub fn from_rows(rows: Vec<Vec<u32>>) -> StreamBatch {
        let rows: Vec<Vec<u32>> = rows
            .into_iter()
            .map(|r| if r.is_empty() { vec![PAD] } else { r })
            .collect();
        let lengths: Vec<usize> = rows.iter().map(Vec::len).collect();
        let width = lengths.iter().copied().max().unwrap_or(1);
        let ids = rows
            .into_iter()
            .map(|mut r| {
                r.resize(width, PAD);
                r
            })
            .collect();
        StreamBatch { ids, lengths }
    }

    /// Row r's ids at its true length.
    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r][..self.lengths[r]]
    }

    /// Validity mask matching the padded matrix.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        self.ids
            .iter()
            .zip(&self.lengths)
            .map(|(row, &len)| (0..row.len()).map(|t| t < len).collect())
            .collect()
    }
}

/// Padded target batch for teacher forcing: `input[r]` is BOS-prefixed,
/// `gold[r]` is EOS-suffixed, both padded to the same width; `mask` is true
/// exactly at the first `lengths[r]` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetBatch {
    pub input: Vec<Vec<u32>>,
    pub gold: Vec<Vec<u32>>,
    pub mask: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub task: String,
    pub streams: BTreeMap<Stream, StreamBatch>,
    pub targets: TargetBatch,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.targets.lengths.len()
    }

    /// Total unpadded target tokens (the weight of this batch in a
    /// token-weighted loss average).
    pub fn target_tokens(&self) -> usize {
        self.targets.lengths.iter().sum()
    }

    /// Check the cross-stream shape invariants: every matrix has the batch's
    /// row count, rows are rectangular, lengths fit, masks match lengths, and
    /// padding is PAD.
    pub fn validate(&self) -> Result<()> {
        let b = self.size();
        let check_stream = |what: &str, s: &StreamBatch| -> Result<()> {
            if s.ids.len() != b || s.lengths.len() != b {
                return Err(Error::contract(format!(
                    "{what} stream has {} rows in a batch of {b}",
                    s.ids.len()
                )));
            }
            let width = s.ids.first().map(|r| r.len()).unwrap_or(0);
            for (r, row) in s.ids.iter().enumerate() {
                if row.len() != width {
                    return Err(Error::contract(format!(
                        "{what} stream row {r} is ragged: {} vs width {width}",
                        row.len()
                    )));
                }
                let len = s.lengths[r];
                if len == 0 || len > width {
                    return Err(Error::contract(format!(
                        "{what} stream row {r} has length {len} outside 1..={width}"
                    )));
                }
                if row[len..].iter().any(|&id| id != PAD) {
                    return Err(Error::contract(format!(
                        "{what} stream row {r} has non-pad ids beyond its length"
                    )));
                }
            }
            Ok(())
        };
        for (stream, s) in &self.streams {
            check_stream(stream.name(), s)?;
        }

        let t = &self.targets;
        if t.input.len() != b || t.gold.len() != b || t.mask.len() != b {
            return Err(Error::contract("target matrices disagree on batch size".to_string()));
        }
        let width = t.input.first().map(|r| r.len()).unwrap_or(0);
        for r in 0..b {
            if t.input[r].len() != width || t.gold[r].len() != width || t.mask[r].len() != width {
                return Err(Error::contract(format!("target row {r} is ragged")));
            }
            let len = t.lengths[r];
            if len == 0 || len > width {
                return Err(Error::contract(format!(
                    "target row {r} has length {len} outside 1..={width}"
                )));
            }
            for pos in 0..width {
                if t.mask[r][pos] != (pos < len) {
                    return Err(Error::contract(format!(
                        "target mask row {r} disagrees with length {len} at position {pos}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Build the teacher-forcing views of one encoded target sequence.
pub(crate) fn target_rows(targets: Vec<Vec<u32>>) -> TargetBatch {
    use nlgen_core::data::{BOS, EOS};
    let lengths: Vec<usize> = targets.iter().map(|t| t.len() + 1).collect();
    let width = lengths.iter().copied().max().unwrap_or(1);
    let mut input = Vec::with_capacity(targets.len());
    let mut gold = Vec::with_capacity(targets.len());
    let mut mask = Vec::with_capacity(targets.len());
    for (row, len) in targets.into_iter().zip(&lengths) {
        let mut i: Vec<u32> = std::iter::once(BOS).chain(row.iter().copied()).collect();
        let mut o: Vec<u32> = row.into_iter().chain(std::iter::once(EOS)).collect();
        i.resize(width, PAD);
        o.resize(width, PAD);
        mask.push((0..width).map(|t| t < *len).collect());
        input.push(i);
        gold.push(o);
    }
    TargetBatch {
        input,
        gold,
        mask,
        lengths,
    }
}
