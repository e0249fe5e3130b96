//! Token vocabularies for the encoder/decoder streams. Ids are stable:
//! specials first, then tokens by descending corpus frequency with
//! lexicographic tie-breaks, so the same corpus always yields the same ids.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{delexicalize, split_tokens, tokenize, Corpus, MeaningRepresentation};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Separator inserted between slot values in the value stream.
pub const SEP_TOKEN: &str = "<sep>";

/// Which token stream of a corpus a vocabulary is built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabField {
    SlotTypes,
    SlotValues,
    DialogAct,
    /// Delexicalized target answers (all references).
    Target,
    /// Previous question; `delex` selects the delexicalized rendering.
    Context { delex: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from frequency counts. Special tokens get the fixed low ids;
    /// counted tokens that collide with a special string are ignored.
    pub fn from_counts(counts: &HashMap<String, usize>) -> Vocabulary {
        let mut ranked: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, _)| !t.is_empty() && !SPECIAL_TOKENS.contains(&t.as_str()))
            .map(|(t, &c)| (t, c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t.clone()))
            .collect();
        Vocabulary::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id for a token, falling back to UNK.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Token string for an id.
    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Index {
                what: "vocabulary id",
                index: id as usize,
                bound: self.tokens.len(),
            })
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.tokens
    }
}

/// Count one stream of a corpus and freeze it into a vocabulary.
///
/// The target stream covers every reference, delexicalized against the
/// instance's MR, since training expands one pair per reference; the stored
/// delexicalization is used for the main reference.
/// Token sequence the slot-type stream sees: one token per slot, in MR order.
pub fn slot_type_tokens(mr: &MeaningRepresentation) -> Vec<String> {
    mr.slots.iter().map(|s| s.slot_type.clone()).collect()
}

/// Token sequence the slot-value stream sees: each value tokenized, with a
/// separator between consecutive slots so slot boundaries stay visible.
pub fn slot_value_tokens(mr: &MeaningRepresentation) -> Vec<String> {
    let mut tokens = Vec::new();
    for (i, slot) in mr.slots.iter().enumerate() {
        if i > 0 {
            tokens.push(SEP_TOKEN.to_string());
        }
        tokens.extend(tokenize(&slot.value));
    }
    tokens
}

pub fn build_vocab(corpus: &Corpus, field: VocabField) -> Result<Vocabulary> {
    let needs_delex = matches!(field, VocabField::Target | VocabField::Context { delex: true });
    if needs_delex && !corpus.is_delexicalized() {
        return Err(Error::contract(format!(
            "building a {field:?} vocabulary requires a delexicalized corpus"
        )));
    }

    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut bump = |token: String| *counts.entry(token).or_insert(0) += 1;
    for inst in &corpus.instances {
        match field {
            VocabField::SlotTypes => {
                for tok in slot_type_tokens(&inst.mr) {
                    bump(tok);
                }
            }
            VocabField::SlotValues => {
                for tok in slot_value_tokens(&inst.mr) {
                    bump(tok);
                }
            }
            VocabField::DialogAct => bump(inst.mr.dialog_act.clone()),
            VocabField::Target => {
                for (i, reference) in inst.references.iter().enumerate() {
                    let delex = if i == 0 {
                        inst.delex_main_reference.clone().unwrap()
                    } else {
                        delexicalize(reference, &inst.mr).0
                    };
                    for tok in split_tokens(&delex) {
                        bump(tok.to_string());
                    }
                }
            }
            VocabField::Context { delex: true } => {
                if inst.context.is_some() {
                    let Some(delex) = &inst.delex_context else {
                        return Err(Error::contract(format!(
                            "instance {} has a context but no delexicalized context",
                            inst.id
                        )));
                    };
                    for tok in split_tokens(delex) {
                        bump(tok.to_string());
                    }
                }
            }
            VocabField::Context { delex: false } => {
                if let Some(context) = &inst.context {
                    for tok in tokenize(context) {
                        bump(tok);
                    }
                }
            }
        }
    }
    Ok(Vocabulary::from_counts(&counts))
}
