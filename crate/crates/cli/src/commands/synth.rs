//! `nlgen synth`: write a synthetic corpus and print its headline statistics.

use std::collections::BTreeSet;

use nlgen_core::data::{save_corpus, synth_corpus, tokenize, Corpus, SynthConfig};
use nlgen_core::{Error, Result};

use crate::SynthArgs;

pub fn run(args: SynthArgs) -> Result<()> {
    if args.groups == 0 || args.per_group == 0 {
        return Err(Error::config("--groups and --per-group must be positive"));
    }
    if args.slot_types < 4 {
        return Err(Error::config(format!(
            "--slot-types must be at least 4 (entity, class, relation, polarity), got {}",
            args.slot_types
        )));
    }
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(Error::config(format!(
            "--noise must lie in [0, 1], got {}",
            args.noise
        )));
    }

    let config = SynthConfig {
        n_groups: args.groups,
        instances_per_group: args.per_group,
        n_slot_types: args.slot_types,
        with_context: args.context,
        noise_rate: args.noise,
    };
    let corpus = synth_corpus(&config, args.seed)?;
    save_corpus(&corpus, &args.out)?;

    println!(
        "run: synth out={} groups={} per_group={} slot_types={} context={} noise={} seed={}",
        args.out.display(),
        args.groups,
        args.per_group,
        args.slot_types,
        if args.context { "on" } else { "off" },
        args.noise,
        args.seed
    );
    println!();
    print_stats(&corpus, &args.out.display().to_string());
    Ok(())
}

/// Headline corpus statistics: instance count, slot-type inventory, dialog
/// act inventory, and lexical word inventory.
fn print_stats(corpus: &Corpus, label: &str) {
    let mut words: BTreeSet<String> = BTreeSet::new();
    for inst in &corpus.instances {
        for reference in &inst.references {
            words.extend(tokenize(reference));
        }
        if let Some(context) = &inst.context {
            words.extend(tokenize(context));
        }
    }
    println!("{:<28}{:>8}{:>8}{:>6}{:>8}", "corpus", "size", "slots", "das", "words");
    println!(
        "{:<28}{:>8}{:>8}{:>6}{:>8}",
        label,
        corpus.len(),
        corpus.ontology().len(),
        corpus.da_inventory().len(),
        words.len()
    );
}
