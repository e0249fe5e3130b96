//! Run checkpoints: the model and its training history, written side by
//! side in one directory so a run can resume or be inspected later.

use std::path::Path;

use nlgen_core::{Error, Result};
use nlgen_model::{checkpoint as model_checkpoint, NlgModel};

use crate::history::TrainHistory;

pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

pub fn checkpoint(model: &NlgModel, history: &TrainHistory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    model_checkpoint::save(model, &dir.join(MODEL_FILE))?;
    let json = serde_json::to_string_pretty(history)
        .map_err(|e| Error::contract(format!("history serialization: {e}")))?;
    let path = dir.join(HISTORY_FILE);
    std::fs::write(&path, json).map_err(io_err(&path))
}

pub fn restore(dir: &Path) -> Result<(NlgModel, TrainHistory)> {
    let model = model_checkpoint::load(&dir.join(MODEL_FILE))?;
    let path = dir.join(HISTORY_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let history = serde_json::from_str(&text).map_err(|e| Error::Schema {
        line: e.line(),
        msg: format!("history: {e}"),
    })?;
    Ok((model, history))
}
