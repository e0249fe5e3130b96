//! `nlgen prepare`: raw corpus in, training-ready files out. The pipeline is
//! delexicalize, alignment-filter, optionally augment references, cut nested
//! ontology partitions, and split each partition into train/dev/test along
//! group boundaries. Outputs are validated before the command reports success.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use nlgen_core::data::{
    align_filter, augment, delexicalize_corpus, load_corpus, make_partitions, save_corpus,
    split_by_group, AlignPolicy, Corpus, CorpusFormat, DroppedInstance, PartitionSpec,
};
use nlgen_core::{Error, Result};
use nlgen_trainer::{fingerprint, Manifest};

use crate::PrepareArgs;

/// Positive comma-separated proportions, normalized to sum to 1.
fn parse_split(spec: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [train, dev, test] = parts[..] else {
        return Err(Error::config(format!(
            "--split expects three comma-separated numbers, got {spec:?}"
        )));
    };
    let parse = |s: &str| -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| Error::config(format!("invalid split proportion {s:?}")))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(format!("split proportions must be positive, got {s}")));
        }
        Ok(v)
    };
    let (train, dev, test) = (parse(train)?, parse(dev)?, parse(test)?);
    let total = train + dev + test;
    Ok((train / total, dev / total, test / total))
}

fn parse_partitions(spec: &str) -> Result<PartitionSpec> {
    let mut sizes = Vec::new();
    for part in spec.split(',') {
        let size: usize = part.trim().parse().map_err(|_| {
            Error::config(format!("invalid partition size {:?}", part.trim()))
        })?;
        sizes.push(size);
    }
    PartitionSpec::new(sizes).map_err(|e| Error::config(e.to_string()))
}

fn write_drop_report(dropped: &[DroppedInstance], path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path.display().to_string(), e);
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = std::io::BufWriter::new(file);
    for drop in dropped {
        writeln!(
            writer,
            "{}",
            serde_json::json!({ "id": drop.instance.id, "reason": drop.reason })
        )
        .map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

/// Partitions must be nested: every instance of a smaller partition appears
/// in all larger ones.
fn check_nested(partitions: &[(String, Corpus)]) -> Result<()> {
    for pair in partitions.windows(2) {
        let smaller: BTreeSet<&str> = pair[0].1.instances.iter().map(|i| i.id.as_str()).collect();
        let larger: BTreeSet<&str> = pair[1].1.instances.iter().map(|i| i.id.as_str()).collect();
        if !smaller.is_subset(&larger) {
            return Err(Error::contract(format!(
                "partition {} is not contained in partition {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    Ok(())
}

/// Train/dev/test must not share a group.
fn check_disjoint(name: &str, parts: &[&Corpus]) -> Result<()> {
    let groups: Vec<BTreeSet<&str>> = parts
        .iter()
        .map(|c| c.instances.iter().map(|i| i.group_id.as_str()).collect())
        .collect();
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            if let Some(shared) = a.intersection(b).next() {
                return Err(Error::contract(format!(
                    "partition {name}: group {shared:?} appears in more than one split"
                )));
            }
        }
    }
    Ok(())
}

pub fn run(args: PrepareArgs) -> Result<()> {
    let format: CorpusFormat = args.format.parse()?;
    let ratios = parse_split(&args.split)?;
    let spec = args.partitions.as_deref().map(parse_partitions).transpose()?;

    let raw = load_corpus(&args.input, format)?;
    let input_bytes =
        std::fs::read(&args.input).map_err(|e| Error::io(args.input.display().to_string(), e))?;

    let delexed = delexicalize_corpus(&raw);
    let (kept, dropped) = align_filter(&delexed, &AlignPolicy::default());

    let kept = if args.augment {
        let mut instances = Vec::with_capacity(kept.len());
        for (_, indices) in kept.groups() {
            let group: Vec<_> = indices.iter().map(|&i| kept.instances[i].clone()).collect();
            instances.extend(augment(&group));
        }
        Corpus::new(kept.name.clone(), instances)
    } else {
        kept
    };

    // One unnamed partition when no budgets were requested; otherwise one
    // sub-corpus per slot-type budget, nested by construction.
    let partitions: Vec<(String, Corpus)> = match &spec {
        None => vec![(String::new(), kept.clone())],
        Some(spec) => {
            let parts = make_partitions(&kept, spec)?;
            spec.sizes.iter().map(|s| format!("part-{s}")).zip(parts).collect()
        }
    };
    check_nested(&partitions)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;

    let mut manifest = Manifest::new();
    manifest.push("command", "prepare");
    manifest.push("in.path", args.input.display());
    manifest.push("in.sha256", fingerprint(&input_bytes));
    manifest.push("format", &args.format);
    manifest.push("augment", if args.augment { "on" } else { "off" });
    manifest.push("split", &args.split);
    manifest.push("partitions", args.partitions.as_deref().unwrap_or("none"));
    manifest.push("seed", args.seed);
    manifest.push("dropped.count", dropped.len());

    println!(
        "run: prepare in={} out={} format={} augment={} split={} partitions={} seed={}",
        args.input.display(),
        args.out.display(),
        args.format,
        if args.augment { "on" } else { "off" },
        args.split,
        args.partitions.as_deref().unwrap_or("none"),
        args.seed
    );
    println!();
    println!("{:<12}{:>8}{:>8}{:>8}{:>8}", "partition", "total", "train", "dev", "test");

    for (name, partition) in &partitions {
        let dir = if name.is_empty() { args.out.clone() } else { args.out.join(name) };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

        let (train, dev, test) = split_by_group(partition, ratios, args.seed)?;
        check_disjoint(if name.is_empty() { "full" } else { name }, &[&train, &dev, &test])?;

        for (split_name, split) in [("train", &train), ("dev", &dev), ("test", &test)] {
            let path = dir.join(format!("{split_name}.jsonl"));
            save_corpus(split, &path)?;
            let key = if name.is_empty() {
                split_name.to_string()
            } else {
                format!("{name}.{split_name}")
            };
            let bytes =
                std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            manifest.push(format!("{key}.count"), split.len());
            manifest.push(format!("{key}.sha256"), fingerprint(&bytes));
        }
        println!(
            "{:<12}{:>8}{:>8}{:>8}{:>8}",
            if name.is_empty() { "full" } else { name },
            partition.len(),
            train.len(),
            dev.len(),
            test.len()
        );
    }

    let drop_path: PathBuf = args.out.join("dropped.jsonl");
    write_drop_report(&dropped, &drop_path)?;
    manifest.write(&args.out.join("manifest.txt"))?;

    println!();
    println!("dropped {} instance(s); report at {}", dropped.len(), drop_path.display());
    Ok(())
}
