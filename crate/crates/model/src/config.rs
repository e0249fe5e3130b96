//! Model configuration: which input streams feed the encoder side, how the
//! previous utterance is rendered, and which tasks get their own decoder.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use nlgen_core::{Error, Result};

/// One encoder input stream. Each enabled stream gets its own embedding table
/// and bidirectional GRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    SlotTypes,
    SlotValues,
    DialogAct,
    Utterance,
}

impl Stream {
    /// The streams that describe the MR itself (everything but the utterance).
    pub const MR_STREAMS: [Stream; 3] = [Stream::SlotTypes, Stream::SlotValues, Stream::DialogAct];

    pub fn name(&self) -> &'static str {
        match self {
            Stream::SlotTypes => "slot_types",
            Stream::SlotValues => "slot_values",
            Stream::DialogAct => "dialog_act",
            Stream::Utterance => "utterance",
        }
    }
}

impl std::str::FromStr for Stream {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stream> {
        match s {
            "slot_types" => Ok(Stream::SlotTypes),
            "slot_values" => Ok(Stream::SlotValues),
            "dialog_act" => Ok(Stream::DialogAct),
            "utterance" => Ok(Stream::Utterance),
            other => Err(Error::config(format!(
                "unknown encoder stream {other:?}, expected one of slot_types, slot_values, dialog_act, utterance"
            ))),
        }
    }
}

/// How the previous utterance reaches its encoder, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceMode {
    Lex,
    Delex,
    None,
}

impl UtteranceMode {
    pub fn name(&self) -> &'static str {
        match self {
            UtteranceMode::Lex => "lex",
            UtteranceMode::Delex => "delex",
            UtteranceMode::None => "none",
        }
    }
}

impl std::str::FromStr for UtteranceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<UtteranceMode> {
        match s {
            "lex" => Ok(UtteranceMode::Lex),
            "delex" => Ok(UtteranceMode::Delex),
            "none" => Ok(UtteranceMode::None),
            other => Err(Error::config(format!(
                "unknown utterance mode {other:?}, expected lex, delex or none"
            ))),
        }
    }
}

fn default_embedding_dim() -> usize {
    50
}

fn default_max_decode_len() -> usize {
    30
}

fn default_context_in_projection() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub enabled_encoders: BTreeSet<Stream>,
    pub utterance_mode: UtteranceMode,
    /// Task names; each owns a decoder and a target vocabulary. Two or more
    /// tasks make the multi-task architecture with shared encoders.
    pub tasks: Vec<String>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    #[serde(default = "default_max_decode_len")]
    pub max_decode_len: usize,
    pub seed: u64,
    /// Feed the attention contexts to the output projection as well as to the
    /// decoder GRU input (the alternative wires them only into the input).
    #[serde(default = "default_context_in_projection")]
    pub context_in_projection: bool,
}

impl ModelConfig {
    /// A config with the customary defaults for everything but the
    /// task-specific knobs.
    pub fn new(
        enabled_encoders: impl IntoIterator<Item = Stream>,
        utterance_mode: UtteranceMode,
        tasks: impl IntoIterator<Item = String>,
        hidden_dim: usize,
        seed: u64,
    ) -> ModelConfig {
        ModelConfig {
            enabled_encoders: enabled_encoders.into_iter().collect(),
            utterance_mode,
            tasks: tasks.into_iter().collect(),
            embedding_dim: default_embedding_dim(),
            hidden_dim,
            max_decode_len: default_max_decode_len(),
            seed,
            context_in_projection: default_context_in_projection(),
        }
    }

    pub fn utterance_enabled(&self) -> bool {
        self.enabled_encoders.contains(&Stream::Utterance)
    }

    /// Enabled MR streams in their canonical order.
    pub fn mr_streams(&self) -> Vec<Stream> {
        Stream::MR_STREAMS
            .iter()
            .copied()
            .filter(|s| self.enabled_encoders.contains(s))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mr_streams().is_empty() {
            return Err(Error::config(
                "at least one MR stream (slot_types, slot_values, dialog_act) must be enabled"
                    .to_string(),
            ));
        }
        let wants_utterance = self.utterance_mode != UtteranceMode::None;
        if wants_utterance != self.utterance_enabled() {
            return Err(Error::config(format!(
                "utterance encoder {} but utterance_mode is {:?}: enable both or neither",
                if self.utterance_enabled() { "enabled" } else { "disabled" },
                self.utterance_mode
            )));
        }
        if self.tasks.is_empty() {
            return Err(Error::config("at least one task is required".to_string()));
        }
        let mut seen = BTreeSet::new();
        for task in &self.tasks {
            if task.is_empty() {
                return Err(Error::config("task names must be nonempty".to_string()));
            }
            if !seen.insert(task) {
                return Err(Error::config(format!("duplicate task name {task:?}")));
            }
        }
        for (what, value) in [
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_decode_len", self.max_decode_len),
        ] {
            if value == 0 {
                return Err(Error::config(format!("{what} must be positive")));
            }
        }
        Ok(())
    }
}
