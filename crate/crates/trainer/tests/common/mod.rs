//! Shared fixtures: a tiny two-task model and matching datasets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nlgen_core::data::{Instance, MeaningRepresentation, Slot, Vocabulary};
use nlgen_model::{ModelConfig, NlgModel, Stream, UtteranceMode};
use nlgen_trainer::{Example, TaskData};

pub fn instance(id: &str, slots: &[(&str, &str)]) -> Instance {
    Instance {
        id: id.to_string(),
        group_id: id.to_string(),
        context: None,
        mr: MeaningRepresentation {
            dialog_act: "inform".to_string(),
            slots: slots.iter().map(|(t, v)| Slot::new(*t, *v)).collect(),
        },
        references: vec![String::new()],
        delex_main_reference: None,
        delex_context: None,
        alignment: None,
    }
}

pub fn example(id: &str, slots: &[(&str, &str)], target: &str) -> Example {
    Example {
        instance: instance(id, slots),
        target: target.to_string(),
    }
}

fn vocab(words: &[&str]) -> Vocabulary {
    let counts: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), words.len() - i))
        .collect();
    Vocabulary::from_counts(&counts)
}

/// A small model over the fixture vocabulary; `tasks` picks the decoders.
pub fn model(tasks: &[&str], hidden_dim: usize, seed: u64) -> NlgModel {
    let config = ModelConfig {
        enabled_encoders: BTreeSet::from([Stream::SlotTypes, Stream::SlotValues]),
        utterance_mode: UtteranceMode::None,
        tasks: tasks.iter().map(|t| t.to_string()).collect(),
        embedding_dim: 6,
        hidden_dim,
        max_decode_len: 8,
        seed,
        context_in_projection: true,
    };
    let stream_vocabs = BTreeMap::from([
        (Stream::SlotTypes, vocab(&["objStr", "relStr", "timepoint"])),
        (
            Stream::SlotValues,
            vocab(&["kentucky", "texas", "ohio", "founded", "formed", "1792", "1845", "1803"]),
        ),
    ]);
    let words: &[&str] = &["OBJ_STR_1", "founded", "formed", "in", "TIMEPOINT_1", "when", "was"];
    let target_vocabs = tasks
        .iter()
        .map(|t| (t.to_string(), vocab(words)))
        .collect();
    NlgModel::new(config, stream_vocabs, target_vocabs).expect("fixture model must build")
}

/// `n` examples whose target realizes the MR with placeholders.
pub fn answer_examples(n: usize) -> Vec<Example> {
    let states = ["kentucky", "texas", "ohio"];
    let rels = ["founded", "formed"];
    let years = ["1792", "1845", "1803"];
    (0..n)
        .map(|i| {
            example(
                &format!("a{i}"),
                &[
                    ("objStr", states[i % states.len()]),
                    ("relStr", rels[i % rels.len()]),
                    ("timepoint", years[i % years.len()]),
                ],
                &format!("OBJ_STR_1 {} in TIMEPOINT_1", rels[i % rels.len()]),
            )
        })
        .collect()
}

pub fn question_examples(n: usize) -> Vec<Example> {
    (0..n)
        .map(|i| example(&format!("q{i}"), &[("objStr", "kentucky")], "when was OBJ_STR_1"))
        .collect()
}

pub fn datasets(train_n: usize, dev_n: usize, tasks: &[&str]) -> BTreeMap<String, TaskData> {
    tasks
        .iter()
        .map(|t| {
            let all = if *t == "question" {
                question_examples(train_n + dev_n)
            } else {
                answer_examples(train_n + dev_n)
            };
            let (train, dev) = all.split_at(train_n);
            (
                t.to_string(),
                TaskData {
                    train: train.to_vec(),
                    dev: dev.to_vec(),
                },
            )
        })
        .collect()
}
