//! The generated-output file format: one JSON object per line, `id` keyed to
//! the corpus instance and `output` holding the generated text. Line order is
//! the corpus order, which is what `evaluate` checks against.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use nlgen_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRow {
    pub id: String,
    pub output: String,
}

pub fn write_outputs(rows: &[OutputRow], path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path.display().to_string(), e);
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::contract(format!("unserializable output row: {e}")))?;
        writeln!(writer, "{line}").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

pub fn read_outputs(path: &Path) -> Result<Vec<OutputRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: OutputRow = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: lineno + 1,
            msg: format!("bad output row: {e}"),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
