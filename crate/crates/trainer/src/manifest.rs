//! Plain-text run manifests: every knob, seed, and dataset fingerprint that
//! determines a run, one `key = value` line each. Deliberately free of
//! timestamps and wall times so identical runs produce identical manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use nlgen_core::{Error, Result};
use nlgen_model::NlgModel;

use crate::batching::{Example, TaskData};
use crate::config::TrainConfig;

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Manifest {
        Manifest::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Hex SHA-256 of arbitrary bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of a dataset: one JSON line per example, hashed in order.
pub fn fingerprint_examples(examples: &[Example]) -> Result<String> {
    let mut hasher = Sha256::new();
    for e in examples {
        let line = serde_json::to_string(&(&e.instance, &e.target)).map_err(|err| {
            Error::contract(format!("example {:?} is not serializable: {err}", e.instance.id))
        })?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}

/// The standard manifest for a training run: code version, full model and
/// training configuration, and per-task dataset fingerprints.
pub fn run_manifest(
    model: &NlgModel,
    config: &TrainConfig,
    datasets: &BTreeMap<String, TaskData>,
) -> Result<Manifest> {
    let mut m = Manifest::new();
    m.push("code_version", env!("CARGO_PKG_VERSION"));

    let mc = model.config();
    let encoders: Vec<&str> = mc.enabled_encoders.iter().map(|s| s.name()).collect();
    m.push("model.encoders", encoders.join(","));
    m.push("model.utterance_mode", mc.utterance_mode.name());
    m.push("model.tasks", mc.tasks.join(","));
    m.push("model.embedding_dim", mc.embedding_dim);
    m.push("model.hidden_dim", mc.hidden_dim);
    m.push("model.max_decode_len", mc.max_decode_len);
    m.push("model.context_in_projection", mc.context_in_projection);
    m.push("model.seed", mc.seed);

    m.push("train.batch_size", config.batch_size);
    m.push("train.max_epochs", config.max_epochs);
    m.push("train.learning_rate", config.learning_rate);
    m.push("train.patience", config.patience);
    m.push("train.min_delta", config.min_delta);
    m.push("train.eval_every", config.eval_every);
    match config.clip_norm {
        Some(c) => m.push("train.clip_norm", c),
        None => m.push("train.clip_norm", "none"),
    }
    m.push("train.seed", config.seed);

    for (task, data) in datasets {
        m.push(format!("data.{task}.train.count"), data.train.len());
        m.push(format!("data.{task}.train.sha256"), fingerprint_examples(&data.train)?);
        m.push(format!("data.{task}.dev.count"), data.dev.len());
        m.push(format!("data.{task}.dev.sha256"), fingerprint_examples(&data.dev)?);
    }
    Ok(m)
}
