//! Model checkpoints: a single JSON document carrying the configuration,
//! every vocabulary, and every parameter tensor. Values round-trip bitwise
//! (the writer refuses non-finite values, and finite f64s survive JSON via
//! shortest-representation formatting).
//!
//! Schema errors report `line: 0` when the complaint is about the document
//! as a whole rather than a malformed line.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use nlgen_core::data::Vocabulary;
use nlgen_core::tensor::Tensor;
use nlgen_core::{Error, Result};

use crate::config::{ModelConfig, Stream};
use crate::net::NlgModel;

const FORMAT: &str = "nlg-model";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    stream_vocabs: BTreeMap<Stream, Vocabulary>,
    target_vocabs: BTreeMap<String, Vocabulary>,
    params: BTreeMap<String, ParamEntry>,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema {
        line: 0,
        msg: msg.into(),
    }
}

/// Serialize a model to checkpoint JSON. Fails on non-finite parameters,
/// naming the first offending one.
pub fn to_json(model: &NlgModel) -> Result<String> {
    let mut params = BTreeMap::new();
    for (name, tensor) in model.params() {
        if let Some(bad) = tensor.data.iter().find(|x| !x.is_finite()) {
            return Err(Error::contract(format!(
                "parameter {name:?} contains the non-finite value {bad}"
            )));
        }
        params.insert(
            name,
            ParamEntry {
                shape: tensor.shape.clone(),
                data: tensor.data.clone(),
            },
        );
    }
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        version: VERSION,
        config: model.config.clone(),
        stream_vocabs: model.stream_vocabs.clone(),
        target_vocabs: model.target_vocabs.clone(),
        params,
    };
    serde_json::to_string(&file).map_err(|e| schema(format!("checkpoint serialization: {e}")))
}

/// Rebuild a model from checkpoint JSON. The configuration and vocabularies
/// are validated by normal construction; every parameter must then be
/// present with its expected shape, and no extras may remain.
pub fn from_json(json: &str) -> Result<NlgModel> {
    let file: CheckpointFile = serde_json::from_str(json).map_err(|e| Error::Schema {
        line: e.line(),
        msg: format!("checkpoint: {e}"),
    })?;
    if file.format != FORMAT {
        return Err(schema(format!(
            "checkpoint field `format`: expected {FORMAT:?}, found {:?}",
            file.format
        )));
    }
    if file.version != VERSION {
        return Err(schema(format!(
            "checkpoint field `version`: expected {VERSION}, found {}",
            file.version
        )));
    }
    let mut model = NlgModel::new(file.config, file.stream_vocabs, file.target_vocabs)?;
    let mut entries = file.params;
    for (name, tensor) in model.params_mut() {
        let entry = entries
            .remove(&name)
            .ok_or_else(|| schema(format!("checkpoint is missing parameter {name:?}")))?;
        if entry.shape != tensor.shape {
            return Err(schema(format!(
                "parameter {name:?}: checkpoint shape {:?} does not match model shape {:?}",
                entry.shape, tensor.shape
            )));
        }
        if entry.data.len() != entry.shape.iter().product::<usize>() {
            return Err(schema(format!(
                "parameter {name:?}: {} values for shape {:?}",
                entry.data.len(),
                entry.shape
            )));
        }
        *tensor = Tensor::new(entry.shape, entry.data)?;
    }
    if let Some(extra) = entries.keys().next() {
        return Err(schema(format!(
            "checkpoint carries unexpected parameter {extra:?}"
        )));
    }
    Ok(model)
}

pub fn save(model: &NlgModel, path: &Path) -> Result<()> {
    let json = to_json(model)?;
    std::fs::write(path, json).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load(path: &Path) -> Result<NlgModel> {
    let json = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    from_json(&json)
}
