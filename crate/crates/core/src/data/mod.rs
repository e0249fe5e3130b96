//! Corpus data model and preparation pipeline: meaning representations,
//! delexicalization, alignment filtering, reference augmentation, group-based
//! splitting, ontology partitions, file formats, and vocabularies.

mod delex;
mod formats;
mod pipeline;
mod synth;
mod vocab;

pub use delex::{
    classify_slot, delexicalize, normalize, parse_placeholder, placeholder_token, relexicalize,
    slot_key, split_tokens, tokenize, SlotClass,
};
pub use formats::{load_corpus, parse_mr_string, save_corpus, CorpusFormat};
pub use pipeline::{
    align_filter, augment, delexicalize_corpus, make_partitions, split_by_group, AlignPolicy,
    DroppedInstance,
};
pub use synth::{synth_corpus, SynthConfig};
pub use vocab::{
    build_vocab, slot_type_tokens, slot_value_tokens, VocabField, Vocabulary, BOS, EOS, PAD,
    SEP_TOKEN, UNK,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};

// ── Core types ──────────────────────────────────────────────────────────────

/// One typed slot of a meaning representation. `slot_type` is a semantic
/// category ("timepoint", "objStr"); `value` is its surface string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    #[serde(rename = "type")]
    pub slot_type: String,
    pub value: String,
}

impl Slot {
    pub fn new(slot_type: impl Into<String>, value: impl Into<String>) -> Slot {
        Slot {
            slot_type: slot_type.into(),
            value: value.into(),
        }
    }
}

/// A dialog act plus an ordered slot list. Slot order is meaningful: it fixes
/// placeholder numbering and the encoder input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeaningRepresentation {
    pub dialog_act: String,
    pub slots: Vec<Slot>,
}

impl MeaningRepresentation {
    /// Count of slots sharing a sanitized type key.
    pub fn count_of_type(&self, key: &str) -> usize {
        self.slots
            .iter()
            .filter(|s| slot_key(&s.slot_type) == key)
            .count()
    }
}

/// How one MR slot relates to a delexicalized text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignStatus {
    /// Noun-phrase value found and replaced by a placeholder.
    Delexicalized,
    /// Relation or binary value found verbatim and left lexical.
    LexicalMatch,
    /// Relation or binary value not found in the text.
    LexicalMiss,
    /// Noun-phrase value absent from the text.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    /// Position of the slot in the MR.
    pub slot_index: usize,
    pub slot_type: String,
    /// Placeholder token used for a delexicalized slot.
    pub placeholder: Option<String>,
    pub status: AlignStatus,
    /// Non-overlapping occurrences found in the text.
    pub occurrences: usize,
}

/// Per-slot record of how a main reference aligned to its MR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub entries: Vec<AlignmentEntry>,
}

impl Alignment {
    pub fn realized_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, AlignStatus::Delexicalized | AlignStatus::LexicalMatch))
            .count()
    }
}

/// One MR-to-text example. `references` holds lexicalized texts, main
/// reference first; the delex fields are filled by the preparation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    /// Instances sharing a group id describe the same underlying question;
    /// splits never separate a group.
    pub group_id: String,
    /// Preceding utterance (the question), if the corpus carries one.
    pub context: Option<String>,
    pub mr: MeaningRepresentation,
    pub references: Vec<String>,
    pub delex_main_reference: Option<String>,
    pub delex_context: Option<String>,
    pub alignment: Option<Alignment>,
}

impl Instance {
    pub fn main_reference(&self) -> &str {
        &self.references[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub instances: Vec<Instance>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, instances: Vec<Instance>) -> Corpus {
        Corpus {
            name: name.into(),
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Set of slot types used anywhere in the corpus.
    pub fn ontology(&self) -> BTreeSet<String> {
        self.instances
            .iter()
            .flat_map(|i| i.mr.slots.iter().map(|s| s.slot_type.clone()))
            .collect()
    }

    pub fn da_inventory(&self) -> BTreeSet<String> {
        self.instances
            .iter()
            .map(|i| i.mr.dialog_act.clone())
            .collect()
    }

    /// Group ids in order of first appearance, each with the indices of its
    /// instances.
    pub fn groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<String> = Vec::new();
        let mut by_group: std::collections::HashMap<&str, Vec<usize>> =
            std::collections::HashMap::new();
        for (idx, inst) in self.instances.iter().enumerate() {
            let list = by_group.entry(inst.group_id.as_str()).or_default();
            if list.is_empty() {
                order.push(inst.group_id.clone());
            }
            list.push(idx);
        }
        order
            .into_iter()
            .map(|gid| {
                let idxs = by_group[gid.as_str()].clone();
                (gid, idxs)
            })
            .collect()
    }

    /// Check the structural invariants every corpus must satisfy: unique
    /// non-empty ids, non-empty group ids, and at least one reference per
    /// instance.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for inst in &self.instances {
            if inst.id.is_empty() || inst.group_id.is_empty() {
                return Err(Error::contract(format!(
                    "instance with empty id or group id (id={:?})",
                    inst.id
                )));
            }
            if !seen.insert(&inst.id) {
                return Err(Error::contract(format!("duplicate instance id {:?}", inst.id)));
            }
            if inst.references.is_empty() {
                return Err(Error::contract(format!(
                    "instance {} has no references",
                    inst.id
                )));
            }
        }
        Ok(())
    }

    /// True once the preparation pipeline has filled the delex fields.
    pub fn is_delexicalized(&self) -> bool {
        self.instances.iter().all(|i| i.delex_main_reference.is_some())
    }
}

/// Requested ontology sizes for nested frequency-ranked partitions, strictly
/// increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub sizes: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(sizes: Vec<usize>) -> Result<PartitionSpec> {
        if sizes.is_empty() {
            return Err(Error::contract("partition spec must list at least one size".to_string()));
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
            return Err(Error::contract(format!(
                "partition sizes must be strictly increasing and positive, got {sizes:?}"
            )));
        }
        Ok(PartitionSpec { sizes })
    }
}
