//! `nlgen`: the batch pipeline in five subcommands. `synth` writes a toy
//! corpus, `prepare` turns a raw corpus into train/dev/test files, `train`
//! fits a model, `generate` decodes a corpus with a trained model, and
//! `evaluate` scores generated outputs. Everything is deterministic given the
//! flags; there is no interactive mode.

mod commands;
mod outputs;
mod runconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlgen_core::Error;

#[derive(Parser)]
#[command(name = "nlgen", version, about = "Generate text from meaning representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic question/answer corpus
    Synth(SynthArgs),
    /// Delexicalize, filter, partition and split a corpus
    Prepare(PrepareArgs),
    /// Train a model on prepared data
    Train(TrainArgs),
    /// Decode a corpus with a trained model
    Generate(GenerateArgs),
    /// Score generated outputs against a corpus
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output corpus file (qa-jsonl)
    #[arg(long)]
    out: PathBuf,
    /// Number of question groups
    #[arg(long, default_value_t = 50)]
    groups: usize,
    /// Instances per group
    #[arg(long = "per-group", default_value_t = 10)]
    per_group: usize,
    /// Slot-type inventory size (at least 4)
    #[arg(long = "slot-types", default_value_t = 7)]
    slot_types: usize,
    /// Attach the question as conversational context
    #[arg(long, value_parser = parse_switch, default_value = "on")]
    context: bool,
    /// Fraction of instances damaged so that alignment filtering drops them
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PrepareArgs {
    /// Input corpus file
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Input format: qa-jsonl or sfx
    #[arg(long, default_value = "qa-jsonl")]
    format: String,
    /// Enlarge reference sets with the group's other answer templates
    #[arg(long, value_parser = parse_switch, default_value = "off")]
    augment: bool,
    /// Train,dev,test proportions
    #[arg(long, default_value = "80,10,10")]
    split: String,
    /// Nested slot-type budgets, e.g. 5,6,7; omitted = one full partition
    #[arg(long)]
    partitions: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Run config file ([model]/[train]/[data] sections of key = value lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task data as task=dir; repeat for multi-task training
    #[arg(long = "data", value_name = "TASK=DIR")]
    data: Vec<String>,
    /// Output directory for checkpoint, history and manifest
    #[arg(long)]
    out: PathBuf,

    // [model] overrides
    /// Comma list of encoder streams
    #[arg(long)]
    encoders: Option<String>,
    /// lex, delex or none
    #[arg(long = "utterance-mode")]
    utterance_mode: Option<String>,
    /// Comma list fixing task order (defaults to --data order)
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long = "embedding-dim")]
    embedding_dim: Option<usize>,
    #[arg(long = "hidden-dim")]
    hidden_dim: Option<usize>,
    #[arg(long = "max-decode-len")]
    max_decode_len: Option<usize>,
    #[arg(long = "model-seed")]
    model_seed: Option<u64>,
    /// Feed attention contexts to the output projection: on or off
    #[arg(long = "context-in-projection", value_parser = parse_switch)]
    context_in_projection: Option<bool>,

    // [train] overrides
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "max-epochs")]
    max_epochs: Option<usize>,
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long = "min-delta")]
    min_delta: Option<f64>,
    #[arg(long = "eval-every")]
    eval_every: Option<usize>,
    /// Gradient clipping threshold, or "none" to disable
    #[arg(long = "clip-norm")]
    clip_norm: Option<String>,
    #[arg(long = "train-seed")]
    train_seed: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Checkpoint file, or a training output directory containing model.json
    #[arg(long)]
    model: PathBuf,
    /// Corpus to decode
    #[arg(long = "in")]
    input: PathBuf,
    /// Input format: qa-jsonl or sfx
    #[arg(long, default_value = "qa-jsonl")]
    format: String,
    /// Output file: one {"id", "output"} object per line
    #[arg(long)]
    out: PathBuf,
    /// Decoder task; may be omitted for single-task models
    #[arg(long)]
    task: Option<String>,
    /// greedy or beam:k
    #[arg(long, default_value = "greedy")]
    decode: String,
    /// Substitute slot values back into placeholders
    #[arg(long, value_parser = parse_switch, default_value = "on")]
    lexicalize: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Generated outputs ({"id", "output"} lines)
    #[arg(long)]
    outputs: PathBuf,
    /// Corpus the outputs answer, in input order
    #[arg(long)]
    corpus: PathBuf,
    /// Corpus format: qa-jsonl or sfx
    #[arg(long, default_value = "qa-jsonl")]
    format: String,
    /// Comma list from: bleu, ser_mr, ser_trg, ser_mtrg
    #[arg(long, default_value = "bleu,ser_mr,ser_trg,ser_mtrg")]
    metrics: String,
    /// Report file (per-instance rows plus aggregates)
    #[arg(long)]
    report: PathBuf,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

/// Exit codes: 1 usage/config, 2 data, 3 violated internal invariant.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Parse { .. }
        | Error::Schema { .. }
        | Error::Io { .. }
        | Error::UnresolvedPlaceholder { .. } => 2,
        Error::Shape { .. } | Error::Index { .. } | Error::Contract(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Prepare(args) => commands::prepare::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Generate(args) => commands::generate::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
