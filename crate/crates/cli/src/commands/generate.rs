//! `nlgen generate`: decode every instance of a corpus with a trained model.
//! Decoding runs in the delexicalized space; by default the slot values are
//! substituted back in afterwards. An output that keeps a placeholder the MR
//! cannot fill is emitted delexicalized with a warning, so one bad instance
//! never sinks a run.

use nlgen_core::data::{load_corpus, relexicalize, CorpusFormat};
use nlgen_core::{Error, Result};
use nlgen_model::{checkpoint, NlgModel};
use nlgen_trainer::MODEL_FILE;

use crate::outputs::{write_outputs, OutputRow};
use crate::GenerateArgs;

enum Decode {
    Greedy,
    Beam(usize),
}

fn parse_decode(spec: &str) -> Result<Decode> {
    if spec == "greedy" {
        return Ok(Decode::Greedy);
    }
    if let Some(k) = spec.strip_prefix("beam:") {
        let width: usize = k
            .parse()
            .map_err(|_| Error::config(format!("invalid beam width {k:?}")))?;
        if width == 0 {
            return Err(Error::config("beam width must be positive"));
        }
        return Ok(Decode::Beam(width));
    }
    Err(Error::config(format!(
        "unknown decode mode {spec:?}, expected greedy or beam:k"
    )))
}

/// The task whose decoder runs: the flag if given, otherwise the model's sole
/// task.
fn pick_task(model: &NlgModel, flag: Option<&str>) -> Result<String> {
    let tasks = &model.config().tasks;
    match flag {
        Some(task) => {
            if !tasks.iter().any(|t| t == task) {
                return Err(Error::config(format!(
                    "model has no task {task:?}; it was trained on {tasks:?}"
                )));
            }
            Ok(task.to_string())
        }
        None if tasks.len() == 1 => Ok(tasks[0].clone()),
        None => Err(Error::config(format!(
            "multi-task model: pick one of {tasks:?} with --task"
        ))),
    }
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let decode = parse_decode(&args.decode)?;
    let format: CorpusFormat = args.format.parse()?;

    let model_path = if args.model.is_dir() { args.model.join(MODEL_FILE) } else { args.model.clone() };
    let model = checkpoint::load(&model_path)?;
    let task = pick_task(&model, args.task.as_deref())?;
    let corpus = load_corpus(&args.input, format)?;

    println!(
        "run: generate model={} in={} out={} task={task} decode={} lexicalize={}",
        model_path.display(),
        args.input.display(),
        args.out.display(),
        args.decode,
        if args.lexicalize { "on" } else { "off" }
    );

    let mut rows = Vec::with_capacity(corpus.len());
    let mut unresolved = 0usize;
    for inst in &corpus.instances {
        let delex_text = match decode {
            Decode::Greedy => model.decode_greedy(&task, inst)?.text(),
            Decode::Beam(width) => {
                let hypotheses = model.decode_beam(&task, inst, width)?;
                hypotheses[0].text()
            }
        };
        let output = if args.lexicalize {
            match relexicalize(&delex_text, &inst.mr) {
                Ok(text) => text,
                Err(Error::UnresolvedPlaceholder { token }) => {
                    eprintln!(
                        "warning: instance {}: placeholder {token} has no value in the MR; output left delexicalized",
                        inst.id
                    );
                    unresolved += 1;
                    delex_text
                }
                Err(e) => return Err(e),
            }
        } else {
            delex_text
        };
        rows.push(OutputRow {
            id: inst.id.clone(),
            output,
        });
    }

    write_outputs(&rows, &args.out)?;
    println!("decoded {} instance(s); {} with unresolved placeholders", rows.len(), unresolved);
    Ok(())
}
