//! File formats: the canonical qa-jsonl corpus serialization, the flat
//! MR-string format used by sfx-style restaurant data, and the MR string
//! grammar itself.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{normalize, Alignment, Corpus, Instance, MeaningRepresentation, Slot};
use crate::error::{Error, Result};

// ── MR strings ──────────────────────────────────────────────────────────────

/// Parse a compact MR string: `da "(" [slot ["=" value] {";" slot ["=" value]}] ")"`.
/// Values may be single-quoted. A slot without a value gets "yes" (binary).
/// Everything is lowercased. Errors carry the 0-based character position.
pub fn parse_mr_string(s: &str) -> Result<MeaningRepresentation> {
    let chars: Vec<char> = s.chars().collect();
    let err = |pos: usize, msg: &str| Error::Parse {
        pos,
        msg: msg.to_string(),
    };

    let open = chars
        .iter()
        .position(|&c| c == '(')
        .ok_or_else(|| err(chars.len(), "expected '(' after dialog act"))?;
    let da: String = chars[..open].iter().collect::<String>().trim().to_lowercase();
    if da.is_empty() {
        return Err(err(0, "empty dialog act"));
    }

    let mut slots = Vec::new();
    let mut pos = open + 1;
    let mut expect_slot = false; // true right after a ';'
    loop {
        while pos < chars.len() && chars[pos].is_whitespace() {
            pos += 1;
        }
        if pos >= chars.len() {
            return Err(err(pos, "expected slot name or ')'"));
        }
        if chars[pos] == ')' && !expect_slot {
            pos += 1;
            break;
        }

        // slot name runs to '=', ';', or ')'
        let name_start = pos;
        while pos < chars.len() && !matches!(chars[pos], '=' | ';' | ')') {
            pos += 1;
        }
        let name: String = chars[name_start..pos]
            .iter()
            .collect::<String>()
            .trim()
            .to_lowercase();
        if name.is_empty() {
            return Err(err(name_start, "empty slot name"));
        }
        if pos >= chars.len() {
            return Err(err(pos, "unterminated slot list, expected ')'"));
        }

        let value = if chars[pos] == '=' {
            pos += 1;
            while pos < chars.len() && chars[pos].is_whitespace() {
                pos += 1;
            }
            if pos < chars.len() && chars[pos] == '\'' {
                let vstart = pos + 1;
                let close = chars[vstart..]
                    .iter()
                    .position(|&c| c == '\'')
                    .ok_or_else(|| err(chars.len(), "unterminated quoted value"))?;
                pos = vstart + close + 1;
                chars[vstart..vstart + close].iter().collect::<String>()
            } else {
                let vstart = pos;
                while pos < chars.len() && !matches!(chars[pos], ';' | ')') {
                    pos += 1;
                }
                chars[vstart..pos].iter().collect::<String>().trim().to_string()
            }
        } else {
            "yes".to_string() // valueless slot is an asserted binary
        };
        slots.push(Slot::new(name, value.to_lowercase()));

        while pos < chars.len() && chars[pos].is_whitespace() {
            pos += 1;
        }
        match chars.get(pos) {
            Some(';') => {
                pos += 1;
                expect_slot = true;
            }
            Some(')') => {
                pos += 1;
                break;
            }
            Some(_) => return Err(err(pos, "expected ';' or ')'")),
            None => return Err(err(pos, "unterminated slot list, expected ')'")),
        }
    }
    if chars[pos..].iter().any(|c| !c.is_whitespace()) {
        return Err(err(pos, "trailing characters after ')'"));
    }
    Ok(MeaningRepresentation { dialog_act: da, slots })
}

// ── qa-jsonl ────────────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct SlotRecord {
    #[serde(rename = "type")]
    slot_type: String,
    value: String,
}

/// On-disk record: one JSON object per line. The delex fields and alignment
/// are optional extensions written by the preparation pipeline so that
/// prepared corpora round-trip through save/load.
#[derive(Serialize, Deserialize)]
struct QaRecord {
    id: String,
    group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context: Option<String>,
    da: String,
    slots: Vec<SlotRecord>,
    references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delex_main_reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delex_context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alignment: Option<Alignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    QaJsonl,
    Sfx,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<CorpusFormat> {
        match s {
            "qa-jsonl" => Ok(CorpusFormat::QaJsonl),
            "sfx" => Ok(CorpusFormat::Sfx),
            other => Err(Error::config(format!(
                "unknown corpus format {other:?}, expected qa-jsonl or sfx"
            ))),
        }
    }
}

fn corpus_name_from(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string())
}

/// Load a corpus file. Lexical texts (context, references, slot values) are
/// normalized on the way in; delex fields are kept verbatim. Schema problems
/// report the 1-based line number.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);
    let mut instances = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let instance = match format {
            CorpusFormat::QaJsonl => parse_qa_line(&line, lineno)?,
            CorpusFormat::Sfx => parse_sfx_line(&line, lineno)?,
        };
        instances.push(instance);
    }
    let corpus = Corpus::new(corpus_name_from(path), instances);
    corpus.validate()?;
    Ok(corpus)
}

fn parse_qa_line(line: &str, lineno: usize) -> Result<Instance> {
    let record: QaRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
        line: lineno,
        msg: e.to_string(),
    })?;
    if record.references.is_empty() {
        return Err(Error::Schema {
            line: lineno,
            msg: format!("instance {} has no references", record.id),
        });
    }
    if record.id.is_empty() || record.group_id.is_empty() {
        return Err(Error::Schema {
            line: lineno,
            msg: "empty id or group_id".to_string(),
        });
    }
    Ok(Instance {
        id: record.id,
        group_id: record.group_id,
        context: record.context.map(|c| normalize(&c)),
        mr: MeaningRepresentation {
            dialog_act: record.da.to_lowercase(),
            slots: record
                .slots
                .into_iter()
                .map(|s| Slot::new(s.slot_type, normalize(&s.value)))
                .collect(),
        },
        references: record.references.iter().map(|r| normalize(r)).collect(),
        delex_main_reference: record.delex_main_reference,
        delex_context: record.delex_context,
        alignment: record.alignment,
    })
}

#[derive(Deserialize)]
struct SfxRecord {
    mr: String,
    references: Vec<String>,
}

/// sfx lines hold a compact MR string plus references. Each line is its own
/// group (restaurant MRs have no question grouping).
fn parse_sfx_line(line: &str, lineno: usize) -> Result<Instance> {
    let record: SfxRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
        line: lineno,
        msg: e.to_string(),
    })?;
    let references: Vec<String> = record
        .references
        .iter()
        .filter(|f| !f.trim().is_empty())
        .map(|r| normalize(r))
        .collect();
    if references.is_empty() {
        return Err(Error::Schema {
            line: lineno,
            msg: "expected at least one reference alongside the MR string".to_string(),
        });
    }
    let mr = parse_mr_string(&record.mr).map_err(|e| Error::Schema {
        line: lineno,
        msg: e.to_string(),
    })?;
    let id = format!("sfx_{lineno:06}");
    Ok(Instance {
        id: id.clone(),
        group_id: id,
        context: None,
        mr,
        references,
        delex_main_reference: None,
        delex_context: None,
        alignment: None,
    })
}

/// Write a corpus as qa-jsonl (the canonical serialization), one instance per
/// line in corpus order. Loading the result reproduces the data model.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for inst in &corpus.instances {
        let record = QaRecord {
            id: inst.id.clone(),
            group_id: inst.group_id.clone(),
            context: inst.context.clone(),
            da: inst.mr.dialog_act.clone(),
            slots: inst
                .mr
                .slots
                .iter()
                .map(|s| SlotRecord {
                    slot_type: s.slot_type.clone(),
                    value: s.value.clone(),
                })
                .collect(),
            references: inst.references.clone(),
            delex_main_reference: inst.delex_main_reference.clone(),
            delex_context: inst.delex_context.clone(),
            alignment: inst.alignment.clone(),
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Schema {
            line: 0,
            msg: format!("failed to serialize instance {}: {e}", inst.id),
        })?;
        out.push(line);
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for line in &out {
        writeln!(file, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}
