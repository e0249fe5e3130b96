//! Shared fixtures: tiny instances, vocabularies, and models.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nlgen_core::data::{Instance, MeaningRepresentation, Slot, Vocabulary};
use nlgen_model::{ModelConfig, NlgModel, Stream, UtteranceMode};

pub fn instance(
    id: &str,
    dialog_act: &str,
    slots: &[(&str, &str)],
    references: &[&str],
    context: Option<&str>,
) -> Instance {
    Instance {
        id: id.to_string(),
        group_id: id.to_string(),
        context: context.map(str::to_string),
        mr: MeaningRepresentation {
            dialog_act: dialog_act.to_string(),
            slots: slots.iter().map(|(t, v)| Slot::new(*t, *v)).collect(),
        },
        references: references.iter().map(|r| r.to_string()).collect(),
        delex_main_reference: None,
        delex_context: None,
        alignment: None,
    }
}

/// A vocabulary whose non-special ids follow the listed order.
pub fn vocab(words: &[&str]) -> Vocabulary {
    let counts: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), words.len() - i))
        .collect();
    Vocabulary::from_counts(&counts)
}

pub struct ModelSpec<'a> {
    pub streams: &'a [Stream],
    pub utterance_mode: UtteranceMode,
    pub tasks: &'a [&'a str],
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_decode_len: usize,
    pub seed: u64,
    pub context_in_projection: bool,
    pub stream_words: &'a [(Stream, &'a [&'a str])],
    pub target_words: &'a [(&'a str, &'a [&'a str])],
}

pub fn build_model(spec: &ModelSpec) -> NlgModel {
    let config = ModelConfig {
        enabled_encoders: BTreeSet::from_iter(spec.streams.iter().copied()),
        utterance_mode: spec.utterance_mode,
        tasks: spec.tasks.iter().map(|t| t.to_string()).collect(),
        embedding_dim: spec.embedding_dim,
        hidden_dim: spec.hidden_dim,
        max_decode_len: spec.max_decode_len,
        seed: spec.seed,
        context_in_projection: spec.context_in_projection,
    };
    let stream_vocabs: BTreeMap<Stream, Vocabulary> = spec
        .stream_words
        .iter()
        .map(|(s, words)| (*s, vocab(words)))
        .collect();
    let target_vocabs: BTreeMap<String, Vocabulary> = spec
        .target_words
        .iter()
        .map(|(t, words)| (t.to_string(), vocab(words)))
        .collect();
    NlgModel::new(config, stream_vocabs, target_vocabs).expect("fixture model must build")
}

/// Three-stream answer generator over a handful of words.
pub fn small_answer_model(seed: u64) -> NlgModel {
    build_model(&ModelSpec {
        streams: &[Stream::SlotTypes, Stream::SlotValues, Stream::DialogAct],
        utterance_mode: UtteranceMode::None,
        tasks: &["answer"],
        embedding_dim: 4,
        hidden_dim: 5,
        max_decode_len: 6,
        seed,
        context_in_projection: true,
        stream_words: &[
            (Stream::SlotTypes, &["objStr", "relStr", "timepoint"]),
            (Stream::SlotValues, &["kentucky", "founded", "1792", "texas"]),
            (Stream::DialogAct, &["inform"]),
        ],
        target_words: &[("answer", &["OBJ_STR_1", "founded", "in", "TIMEPOINT_1", "yes"])],
    })
}

pub fn kentucky_instance() -> Instance {
    instance(
        "k1",
        "inform",
        &[("objStr", "kentucky"), ("relStr", "founded"), ("timepoint", "1792")],
        &["kentucky was founded in 1792"],
        None,
    )
}
