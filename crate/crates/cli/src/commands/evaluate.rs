//! `nlgen evaluate`: score an outputs file against the corpus it answers.
//! Outputs and corpus must be aligned line-for-line by instance id; the
//! metric math lives in the metrics crate. Scores never affect the exit code,
//! so sweeps can collect bad runs as data rather than failures.

use nlgen_core::data::{load_corpus, CorpusFormat};
use nlgen_core::{Error, Result};
use nlgen_metrics::{evaluate_corpus, Metric};

use crate::outputs::read_outputs;
use crate::EvaluateArgs;

fn parse_metrics(spec: &str) -> Result<Vec<Metric>> {
    let mut metrics = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let metric: Metric = part.parse()?;
        if !metrics.contains(&metric) {
            metrics.push(metric);
        }
    }
    if metrics.is_empty() {
        return Err(Error::config(
            "--metrics must name at least one of bleu, ser_mr, ser_trg, ser_mtrg",
        ));
    }
    Ok(metrics)
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let metrics = parse_metrics(&args.metrics)?;
    let format: CorpusFormat = args.format.parse()?;

    let rows = read_outputs(&args.outputs)?;
    let corpus = load_corpus(&args.corpus, format)?;

    if rows.len() != corpus.len() {
        return Err(Error::config(format!(
            "{} outputs for {} corpus instances",
            rows.len(),
            corpus.len()
        )));
    }
    for (row, inst) in rows.iter().zip(&corpus.instances) {
        if row.id != inst.id {
            return Err(Error::config(format!(
                "outputs and corpus are misaligned: output id {:?} against instance {:?}",
                row.id, inst.id
            )));
        }
    }

    let outputs: Vec<String> = rows.into_iter().map(|r| r.output).collect();
    let report = evaluate_corpus(&outputs, &corpus, &metrics)?;

    println!(
        "run: evaluate outputs={} corpus={} metrics={}",
        args.outputs.display(),
        args.corpus.display(),
        args.metrics
    );
    println!();
    print!("{}", report.table());

    let rendered = report.render()?;
    std::fs::write(&args.report, rendered)
        .map_err(|e| Error::io(args.report.display().to_string(), e))?;
    println!();
    println!("report written to {}", args.report.display());
    Ok(())
}
