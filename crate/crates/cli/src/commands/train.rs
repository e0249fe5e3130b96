//! `nlgen train`: load prepared data, freeze vocabularies, fit the model, and
//! leave a checkpoint, a training history, and a reproduction manifest in the
//! output directory. Configuration problems are caught before the first
//! epoch; a failed run writes nothing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nlgen_core::data::{
    build_vocab, delexicalize, load_corpus, Corpus, CorpusFormat, VocabField, Vocabulary,
};
use nlgen_core::{Error, Result};
use nlgen_model::{NlgModel, Stream, UtteranceMode};
use nlgen_trainer::{checkpoint, run_manifest, train, Example, TaskData, TrainHistory};

use crate::runconfig::{self, RunConfig};
use crate::TrainArgs;

/// Fold command-line overrides into the file config (flags win).
fn apply_overrides(config: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    for binding in &args.data {
        let Some((task, dir)) = binding.split_once('=') else {
            return Err(Error::config(format!(
                "--data expects task=dir, got {binding:?}"
            )));
        };
        let (task, dir) = (task.trim(), dir.trim());
        if task.is_empty() || dir.is_empty() {
            return Err(Error::config(format!(
                "--data expects task=dir, got {binding:?}"
            )));
        }
        config.bind_data(task, PathBuf::from(dir));
    }

    let model = &mut config.model;
    if let Some(spec) = &args.encoders {
        model.encoders = runconfig::parse_encoders(spec)?;
    }
    if let Some(mode) = &args.utterance_mode {
        model.utterance_mode = mode.parse()?;
    }
    if let Some(spec) = &args.tasks {
        model.tasks = Some(runconfig::parse_tasks(spec)?);
    }
    if let Some(dim) = args.embedding_dim {
        model.embedding_dim = dim;
    }
    if let Some(dim) = args.hidden_dim {
        model.hidden_dim = dim;
    }
    if let Some(len) = args.max_decode_len {
        model.max_decode_len = len;
    }
    if let Some(seed) = args.model_seed {
        model.seed = seed;
    }
    if let Some(flag) = args.context_in_projection {
        model.context_in_projection = flag;
    }

    let train = &mut config.train;
    if let Some(v) = args.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        train.max_epochs = v;
    }
    if let Some(v) = args.learning_rate {
        train.learning_rate = v;
    }
    if let Some(v) = args.patience {
        train.patience = v;
    }
    if let Some(v) = args.min_delta {
        train.min_delta = v;
    }
    if let Some(v) = args.eval_every {
        train.eval_every = v;
    }
    if let Some(spec) = &args.clip_norm {
        train.clip_norm = runconfig::parse_clip(spec)?;
    }
    if let Some(seed) = args.train_seed {
        train.seed = seed;
    }
    Ok(())
}

/// A delexicalized split file, loaded. Missing files and raw (unprepared)
/// corpora are usage errors: both mean the data directory was not produced by
/// `prepare`.
fn load_split(dir: &Path, split: &str) -> Result<Corpus> {
    let path = dir.join(format!("{split}.jsonl"));
    if !path.is_file() {
        return Err(Error::config(format!(
            "missing {split} file {}; point --data at a prepare output directory",
            path.display()
        )));
    }
    let corpus = load_corpus(&path, CorpusFormat::QaJsonl)?;
    if corpus.instances.is_empty() {
        return Err(Error::config(format!("{} is empty", path.display())));
    }
    if !corpus.is_delexicalized() {
        return Err(Error::config(format!(
            "{} is not delexicalized; run prepare first",
            path.display()
        )));
    }
    Ok(corpus)
}

/// One training pair per reference: the stored delexicalization for the main
/// reference, a fresh one for the alternates.
fn expand_examples(corpus: &Corpus) -> Vec<Example> {
    let mut examples = Vec::new();
    for inst in &corpus.instances {
        for (i, reference) in inst.references.iter().enumerate() {
            let target = if i == 0 {
                inst.delex_main_reference.clone().unwrap_or_default()
            } else {
                delexicalize(reference, &inst.mr).0
            };
            examples.push(Example {
                instance: inst.clone(),
                target,
            });
        }
    }
    examples
}

fn stream_field(stream: Stream, mode: UtteranceMode) -> Result<VocabField> {
    Ok(match stream {
        Stream::SlotTypes => VocabField::SlotTypes,
        Stream::SlotValues => VocabField::SlotValues,
        Stream::DialogAct => VocabField::DialogAct,
        Stream::Utterance => match mode {
            UtteranceMode::Lex => VocabField::Context { delex: false },
            UtteranceMode::Delex => VocabField::Context { delex: true },
            UtteranceMode::None => {
                return Err(Error::config(
                    "the utterance encoder is enabled but utterance_mode is none",
                ))
            }
        },
    })
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            runconfig::parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, &args)?;
    if config.data.is_empty() {
        return Err(Error::config(
            "no data bound: pass --data task=dir or a [data] section",
        ));
    }
    let model_config = config.model_config()?;
    config.train.validate()?;
    if model_config.utterance_mode != UtteranceMode::None && !model_config.utterance_enabled() {
        return Err(Error::config(format!(
            "utterance_mode is {} but the utterance encoder is not enabled",
            model_config.utterance_mode.name()
        )));
    }

    // Load every split up front so config and data problems surface before
    // any training time is spent.
    let mut train_corpora: BTreeMap<String, Corpus> = BTreeMap::new();
    let mut datasets: BTreeMap<String, TaskData> = BTreeMap::new();
    for (task, dir) in &config.data {
        let train_corpus = load_split(dir, "train")?;
        let dev_corpus = load_split(dir, "dev")?;
        datasets.insert(
            task.clone(),
            TaskData {
                train: expand_examples(&train_corpus),
                dev: expand_examples(&dev_corpus),
            },
        );
        train_corpora.insert(task.clone(), train_corpus);
    }

    // Encoders are shared across tasks, so encoder vocabularies are built
    // over the union of the training splits; each decoder sees only its own.
    let union = Corpus::new(
        "train-union",
        train_corpora.values().flat_map(|c| c.instances.iter().cloned()).collect(),
    );
    if model_config.utterance_enabled() && union.instances.iter().all(|i| i.context.is_none()) {
        return Err(Error::config(
            "the utterance encoder is enabled but no training instance has a context",
        ));
    }
    let mut stream_vocabs: BTreeMap<Stream, Vocabulary> = BTreeMap::new();
    for &stream in &model_config.enabled_encoders {
        let field = stream_field(stream, model_config.utterance_mode)?;
        stream_vocabs.insert(stream, build_vocab(&union, field)?);
    }
    let mut target_vocabs: BTreeMap<String, Vocabulary> = BTreeMap::new();
    for (task, corpus) in &train_corpora {
        target_vocabs.insert(task.clone(), build_vocab(corpus, VocabField::Target)?);
    }

    let mut model = NlgModel::new(model_config, stream_vocabs, target_vocabs)?;
    print_run_line(&config, &args.out);
    let history = train(&mut model, &datasets, &config.train)?;
    print_history(&history);

    checkpoint(&model, &history, &args.out)?;
    let manifest = run_manifest(&model, &config.train, &datasets)?;
    manifest.write(&args.out.join("manifest.txt"))?;
    println!();
    println!("checkpoint, history and manifest written to {}", args.out.display());
    Ok(())
}

fn print_run_line(config: &RunConfig, out: &Path) {
    let data: Vec<String> = config
        .data
        .iter()
        .map(|(task, dir)| format!("{task}={}", dir.display()))
        .collect();
    println!("run: train out={} data={}", out.display(), data.join(","));
}

fn print_history(history: &TrainHistory) {
    for record in &history.epochs {
        let train: Vec<String> = record
            .train_loss
            .iter()
            .map(|(task, loss)| format!("{task}={loss:.4}"))
            .collect();
        let val = match record.val_loss {
            Some(loss) => format!("  val={loss:.4}"),
            None => String::new(),
        };
        println!("epoch {:>4}  train {}{}", record.epoch, train.join(" "), val);
    }
    let best = match (history.best_epoch, history.best_val_loss()) {
        (Some(epoch), Some(loss)) => format!("best epoch {epoch} (val {loss:.4})"),
        _ => "no evaluated epoch".to_string(),
    };
    println!("stopped: {:?}; {best}", history.stop_reason);
}
