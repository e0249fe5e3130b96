//! Run configuration: a plain-text file of `key = value` lines under
//! `[model]`, `[train]` and `[data]` section headers, merged with command-line
//! overrides. Unknown sections and keys are rejected so a typo cannot
//! silently fall back to a default.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nlgen_core::{Error, Result};
use nlgen_model::{ModelConfig, Stream, UtteranceMode};
use nlgen_trainer::TrainConfig;

/// Model-side settings before they are frozen into a [`ModelConfig`]. Tasks
/// stay optional here because they normally come from the data bindings.
#[derive(Debug, Clone)]
pub struct ModelSettings {
    pub encoders: BTreeSet<Stream>,
    pub utterance_mode: UtteranceMode,
    pub tasks: Option<Vec<String>>,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_decode_len: usize,
    pub seed: u64,
    pub context_in_projection: bool,
}

impl Default for ModelSettings {
    fn default() -> ModelSettings {
        let defaults = ModelConfig::new(
            [Stream::SlotTypes, Stream::SlotValues, Stream::DialogAct],
            UtteranceMode::None,
            ["answer".to_string()],
            64,
            0,
        );
        ModelSettings {
            encoders: defaults.enabled_encoders,
            utterance_mode: defaults.utterance_mode,
            tasks: None,
            embedding_dim: defaults.embedding_dim,
            hidden_dim: defaults.hidden_dim,
            max_decode_len: defaults.max_decode_len,
            seed: defaults.seed,
            context_in_projection: defaults.context_in_projection,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub model: ModelSettings,
    pub train: TrainConfig,
    /// Ordered task → data directory bindings.
    pub data: Vec<(String, PathBuf)>,
}

impl RunConfig {
    /// Freeze the model settings, resolving the task list against the data
    /// bindings: an explicit `tasks` key fixes the order but must name
    /// exactly the bound tasks; otherwise binding order decides.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let bound: Vec<&str> = self.data.iter().map(|(t, _)| t.as_str()).collect();
        let tasks = match &self.model.tasks {
            Some(tasks) => {
                let named: BTreeSet<&str> = tasks.iter().map(|t| t.as_str()).collect();
                let have: BTreeSet<&str> = bound.iter().copied().collect();
                if named != have {
                    return Err(Error::config(format!(
                        "tasks {tasks:?} do not match the data bindings {bound:?}"
                    )));
                }
                tasks.clone()
            }
            None => bound.iter().map(|t| t.to_string()).collect(),
        };
        Ok(ModelConfig {
            enabled_encoders: self.model.encoders.clone(),
            utterance_mode: self.model.utterance_mode,
            tasks,
            embedding_dim: self.model.embedding_dim,
            hidden_dim: self.model.hidden_dim,
            max_decode_len: self.model.max_decode_len,
            seed: self.model.seed,
            context_in_projection: self.model.context_in_projection,
        })
    }

    /// Bind a task to a data directory, replacing an earlier binding of the
    /// same task and keeping first-appearance order otherwise.
    pub fn bind_data(&mut self, task: &str, dir: PathBuf) {
        match self.data.iter_mut().find(|(t, _)| t == task) {
            Some((_, d)) => *d = dir,
            None => self.data.push((task.to_string(), dir)),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" => Ok(true),
        "false" | "off" => Ok(false),
        _ => Err(Error::config(format!(
            "invalid value {value:?} for {key}, expected true or false"
        ))),
    }
}

pub fn parse_encoders(spec: &str) -> Result<BTreeSet<Stream>> {
    let mut encoders = BTreeSet::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        encoders.insert(part.parse::<Stream>()?);
    }
    if encoders.is_empty() {
        return Err(Error::config("encoders must name at least one stream"));
    }
    Ok(encoders)
}

pub fn parse_tasks(spec: &str) -> Result<Vec<String>> {
    let mut tasks = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if tasks.iter().any(|t| t == part) {
            return Err(Error::config(format!("task {part:?} listed twice")));
        }
        tasks.push(part.to_string());
    }
    if tasks.is_empty() {
        return Err(Error::config("tasks must name at least one task"));
    }
    Ok(tasks)
}

/// Clip threshold: a positive number, or "none" to disable clipping.
pub fn parse_clip(value: &str) -> Result<Option<f64>> {
    if value == "none" {
        return Ok(None);
    }
    let clip: f64 = parse_value("clip_norm", value)?;
    Ok(Some(clip))
}

/// Parse a config file's text. Defaults are the standard recipe, so an empty
/// file is a valid config.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut section: Option<&str> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::config(format!("line {lineno}: malformed section header {line:?}")))?;
            section = match name {
                "model" | "train" | "data" => Some(name),
                other => {
                    return Err(Error::config(format!(
                        "line {lineno}: unknown section [{other}], expected [model], [train] or [data]"
                    )))
                }
            };
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "line {lineno}: expected key = value, got {line:?}"
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = section else {
            return Err(Error::config(format!(
                "line {lineno}: {key:?} appears before any section header"
            )));
        };
        match section {
            "model" => apply_model_key(&mut config.model, key, value)
                .map_err(|e| Error::config(format!("line {lineno}: {e}")))?,
            "train" => apply_train_key(&mut config.train, key, value)
                .map_err(|e| Error::config(format!("line {lineno}: {e}")))?,
            _ => config.bind_data(key, PathBuf::from(value)),
        }
    }
    Ok(config)
}

fn apply_model_key(model: &mut ModelSettings, key: &str, value: &str) -> Result<()> {
    match key {
        "encoders" => model.encoders = parse_encoders(value)?,
        "utterance_mode" => model.utterance_mode = value.parse()?,
        "tasks" => model.tasks = Some(parse_tasks(value)?),
        "embedding_dim" => model.embedding_dim = parse_value(key, value)?,
        "hidden_dim" => model.hidden_dim = parse_value(key, value)?,
        "max_decode_len" => model.max_decode_len = parse_value(key, value)?,
        "seed" => model.seed = parse_value(key, value)?,
        "context_in_projection" => model.context_in_projection = parse_bool(key, value)?,
        other => return Err(Error::config(format!("unknown [model] key {other:?}"))),
    }
    Ok(())
}

fn apply_train_key(train: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "batch_size" => train.batch_size = parse_value(key, value)?,
        "max_epochs" => train.max_epochs = parse_value(key, value)?,
        "learning_rate" => train.learning_rate = parse_value(key, value)?,
        "patience" => train.patience = parse_value(key, value)?,
        "min_delta" => train.min_delta = parse_value(key, value)?,
        "eval_every" => train.eval_every = parse_value(key, value)?,
        "clip_norm" => train.clip_norm = parse_clip(value)?,
        "seed" => train.seed = parse_value(key, value)?,
        other => return Err(Error::config(format!("unknown [train] key {other:?}"))),
    }
    Ok(())
}
