//! Detection of which MR slots a text realizes. All comparisons downstream
//! run over these multisets, so the counting rule lives in exactly one place:
//! placeholder tokens count toward their slot type, and relation/binary slots
//! (which are never delexicalized) count one per non-overlapping
//! token-sequence match of their MR value.

use std::collections::BTreeMap;

use nlgen_core::data::{
    classify_slot, parse_placeholder, slot_key, split_tokens, tokenize, MeaningRepresentation,
    SlotClass,
};

/// Multiset of realized slot identities, keyed by canonical slot key
/// (lowercase alphanumeric form of the slot type).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotRealization {
    counts: BTreeMap<String, usize>,
}

impl SlotRealization {
    pub fn from_counts(counts: BTreeMap<String, usize>) -> SlotRealization {
        SlotRealization { counts }
    }

    pub fn count(&self, key: &str) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Total number of realized slot occurrences.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.values().all(|&c| c == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.counts.iter().map(|(k, &c)| (k.as_str(), c))
    }

    /// Slot keys present with a nonzero count.
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, _)| k.as_str())
    }
}

/// Count the slots a delexicalized text realizes, relative to an MR.
///
/// Placeholder tokens are counted whether or not their type occurs in the MR
/// (an invented placeholder is a redundancy, not a non-event). Lexical slots
/// are detected by exact token-sequence match of the slot value; matches are
/// non-overlapping, scanned left to right.
pub fn realized_slots(text: &str, mr: &MeaningRepresentation) -> SlotRealization {
    let tokens = split_tokens(text);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();

    for token in &tokens {
        if let Some((key, _)) = parse_placeholder(token) {
            *counts.entry(key).or_insert(0) += 1;
        }
    }

    for slot in &mr.slots {
        if classify_slot(slot) == SlotClass::NounPhrase {
            continue;
        }
        let needle = tokenize(&slot.value);
        let found = count_token_matches(&tokens, &needle);
        if found > 0 {
            *counts.entry(slot_key(&slot.slot_type)).or_insert(0) += found;
        }
    }

    SlotRealization { counts }
}

/// Non-overlapping left-to-right occurrences of `needle` in `tokens`.
fn count_token_matches(tokens: &[&str], needle: &[String]) -> usize {
    if needle.is_empty() || needle.len() > tokens.len() {
        return 0;
    }
    let mut count = 0;
    let mut pos = 0;
    while pos + needle.len() <= tokens.len() {
        if tokens[pos..pos + needle.len()]
            .iter()
            .zip(needle.iter())
            .all(|(a, b)| *a == b)
        {
            count += 1;
            pos += needle.len();
        } else {
            pos += 1;
        }
    }
    count
}

/// The expected multiset an MR itself defines: one occurrence per slot.
pub fn mr_slot_counts(mr: &MeaningRepresentation) -> SlotRealization {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for slot in &mr.slots {
        *counts.entry(slot_key(&slot.slot_type)).or_insert(0) += 1;
    }
    SlotRealization { counts }
}
