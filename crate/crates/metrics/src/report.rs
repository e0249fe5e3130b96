//! Corpus evaluation: run the requested metrics over aligned (output,
//! instance) pairs and render one report that is machine-readable line by
//! line, with a human-readable table in comment lines at the end.
//!
//! SER comparisons happen in delexicalized space: outputs and references are
//! delexicalized against the instance MR first (a no-op for text that is
//! already delexicalized). BLEU compares the texts as given, token for token.

use std::collections::BTreeMap;

use serde::Serialize;

use nlgen_core::data::{delexicalize, Corpus, Instance};
use nlgen_core::{Error, Result};

use crate::bleu::{bleu, BleuReport};
use crate::ser::{aggregate_ser, ser_mr, ser_mtrg, ser_trg, SerInstance, SerReport, SerVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bleu,
    SerMr,
    SerTrg,
    SerMtrg,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Bleu, Metric::SerMr, Metric::SerTrg, Metric::SerMtrg];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::SerMr => "ser_mr",
            Metric::SerTrg => "ser_trg",
            Metric::SerMtrg => "ser_mtrg",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Metric> {
        match s {
            "bleu" => Ok(Metric::Bleu),
            "ser_mr" => Ok(Metric::SerMr),
            "ser_trg" => Ok(Metric::SerTrg),
            "ser_mtrg" => Ok(Metric::SerMtrg),
            other => Err(Error::config(format!(
                "unknown metric {other:?}, expected one of bleu, ser_mr, ser_trg, ser_mtrg"
            ))),
        }
    }
}

/// Per-instance metric values, one JSON object per report line.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceRow {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ser_mr: Option<SerInstance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ser_trg: Option<SerInstance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ser_mtrg: Option<SerInstance>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<InstanceRow>,
    pub bleu: Option<BleuReport>,
    /// Aggregated SER reports keyed by variant name.
    pub ser: BTreeMap<String, SerReport>,
}

fn delex_references(inst: &Instance) -> Vec<String> {
    inst.references
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if i == 0 {
                if let Some(d) = &inst.delex_main_reference {
                    return d.clone();
                }
            }
            delexicalize(r, &inst.mr).0
        })
        .collect()
}

/// Evaluate aligned outputs against a corpus. `outputs[i]` answers
/// `corpus.instances[i]`.
pub fn evaluate_corpus(
    outputs: &[String],
    corpus: &Corpus,
    metrics: &[Metric],
) -> Result<EvalReport> {
    if outputs.len() != corpus.len() {
        return Err(Error::contract(format!(
            "{} outputs for {} instances",
            outputs.len(),
            corpus.len()
        )));
    }
    let want = |m: Metric| metrics.contains(&m);

    let mut rows = Vec::with_capacity(outputs.len());
    let mut per_variant: BTreeMap<SerVariant, Vec<SerInstance>> = BTreeMap::new();
    for (output, inst) in outputs.iter().zip(&corpus.instances) {
        let delex_out = delexicalize(output, &inst.mr).0;
        let refs = delex_references(inst);

        let mut row = InstanceRow {
            id: inst.id.clone(),
            ser_mr: None,
            ser_trg: None,
            ser_mtrg: None,
        };
        if want(Metric::SerMr) {
            let item = ser_mr(&delex_out, &inst.mr);
            per_variant.entry(SerVariant::Mr).or_default().push(item.clone());
            row.ser_mr = Some(item);
        }
        if want(Metric::SerTrg) {
            let item = ser_trg(&delex_out, &refs[0], &inst.mr);
            per_variant.entry(SerVariant::Trg).or_default().push(item.clone());
            row.ser_trg = Some(item);
        }
        if want(Metric::SerMtrg) {
            let item = ser_mtrg(&delex_out, &refs, &inst.mr);
            per_variant
                .entry(SerVariant::Mtrg)
                .or_default()
                .push(item.clone());
            row.ser_mtrg = Some(item);
        }
        rows.push(row);
    }

    let bleu_report = if want(Metric::Bleu) {
        let reference_sets: Vec<Vec<String>> = corpus
            .instances
            .iter()
            .map(|i| i.references.clone())
            .collect();
        Some(bleu(outputs, &reference_sets)?)
    } else {
        None
    };

    let ser = per_variant
        .into_iter()
        .map(|(variant, items)| (variant.name().to_string(), aggregate_ser(variant, items)))
        .collect();

    Ok(EvalReport {
        rows,
        bleu: bleu_report,
        ser,
    })
}

fn fmt_opt(score: Option<f64>) -> String {
    match score {
        Some(s) => format!("{s:.4}"),
        None => "-".to_string(),
    }
}

impl EvalReport {
    /// Full report: header comments, one JSON object per instance, one JSON
    /// aggregate object, then the aligned human-readable table as comments.
    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str("# slot counting: multiset per slot type with clipping, compared in delexicalized space\n");
        out.push_str("# headline aggregate: micro SER = (sum p + sum q) / sum N; macro = mean of defined per-instance scores\n");
        for row in &self.rows {
            let line = serde_json::to_string(row)
                .map_err(|e| Error::contract(format!("failed to serialize report row: {e}")))?;
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&self.aggregate_line()?);
        out.push('\n');
        out.push_str(&self.table());
        Ok(out)
    }

    fn aggregate_line(&self) -> Result<String> {
        #[derive(Serialize)]
        struct SerAggregate {
            micro: Option<f64>,
            macro_avg: Option<f64>,
            skipped: usize,
        }
        #[derive(Serialize)]
        struct Aggregate<'a> {
            instances: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            bleu: Option<&'a BleuReport>,
            #[serde(skip_serializing_if = "BTreeMap::is_empty")]
            ser: BTreeMap<&'a str, SerAggregate>,
        }
        let aggregate = Aggregate {
            instances: self.rows.len(),
            bleu: self.bleu.as_ref(),
            ser: self
                .ser
                .iter()
                .map(|(name, report)| {
                    (
                        name.as_str(),
                        SerAggregate {
                            micro: report.micro,
                            macro_avg: report.macro_avg,
                            skipped: report.skipped,
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string(&serde_json::json!({ "aggregate": aggregate }))
            .map_err(|e| Error::contract(format!("failed to serialize aggregates: {e}")))
    }

    /// Aligned human-readable table, every line prefixed with `# `.
    pub fn table(&self) -> String {
        let variants: Vec<&str> = self.ser.keys().map(|k| k.as_str()).collect();
        let mut lines: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["id".to_string()];
        header.extend(variants.iter().map(|v| v.to_string()));
        lines.push(header);
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells = vec![row.id.clone()];
            for variant in &variants {
                let item = self.ser[*variant].instances.get(i);
                cells.push(fmt_opt(item.and_then(|it| it.score)));
            }
            lines.push(cells);
        }

        let n_cols = lines[0].len();
        let widths: Vec<usize> = (0..n_cols)
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &lines {
            let rendered: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, cell)| format!("{cell:<width$}", width = widths[c]))
                .collect();
            out.push_str(&format!("# {}\n", rendered.join("  ").trim_end()));
        }
        for variant in &variants {
            let report = &self.ser[*variant];
            out.push_str(&format!(
                "# {variant}: micro {} macro {} skipped {}\n",
                fmt_opt(report.micro),
                fmt_opt(report.macro_avg),
                report.skipped
            ));
        }
        if let Some(b) = &self.bleu {
            out.push_str(&format!(
                "# bleu: {:.4} (p1 {:.4} p2 {:.4} p3 {:.4} p4 {:.4} bp {:.4})\n",
                b.score,
                b.precisions[0],
                b.precisions[1],
                b.precisions[2],
                b.precisions[3],
                b.brevity_penalty
            ));
        }
        out
    }
}
