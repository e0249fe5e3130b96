//! Corpus preparation stages: delexicalization over whole corpora, alignment
//! filtering, template augmentation within question groups, group-disjoint
//! splitting, and progressive ontology partitions.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;

use crate::data::{
    classify_slot, delexicalize, relexicalize, split_tokens, tokenize, Corpus, Instance,
    PartitionSpec, SlotClass,
};
use crate::error::{Error, Result};
use crate::rng;

// ── Delexicalization over a corpus ──────────────────────────────────────────

/// Delexicalize every instance's main reference (and context, when present)
/// against its own MR, recording the alignment. Idempotent: existing delex
/// fields are recomputed from the lexical sources.
pub fn delexicalize_corpus(corpus: &Corpus) -> Corpus {
    let instances = corpus
        .instances
        .iter()
        .map(|inst| {
            let mut out = inst.clone();
            let (delex, alignment) = delexicalize(inst.main_reference(), &inst.mr);
            out.delex_main_reference = Some(delex);
            out.alignment = Some(alignment);
            out.delex_context = inst.context.as_deref().map(|c| delexicalize(c, &inst.mr).0);
            out
        })
        .collect();
    Corpus::new(corpus.name.clone(), instances)
}

// ── Alignment filtering ─────────────────────────────────────────────────────

/// Keep/drop policy for [`align_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignPolicy {
    /// Minimum number of MR slots that must be realized in the main reference.
    pub min_realized_slots: usize,
    /// Drop instances whose delexicalized main reference still contains a
    /// noun-phrase value known from elsewhere in the corpus.
    pub reject_foreign_values: bool,
}

impl Default for AlignPolicy {
    fn default() -> AlignPolicy {
        AlignPolicy {
            min_realized_slots: 1,
            reject_foreign_values: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedInstance {
    pub instance: Instance,
    pub reason: String,
}

/// Filter out instances whose main reference could not be aligned to their MR.
///
/// An instance survives when at least `min_realized_slots` of its MR slots
/// appear in the main reference and, under `reject_foreign_values`, when no
/// noun-phrase value belonging to some other instance is left lexical in the
/// delexicalized main reference. The foreign-value check is the heuristic
/// stand-in for full entity recognition: the corpus itself supplies the
/// inventory of known noun phrases.
pub fn align_filter(corpus: &Corpus, policy: &AlignPolicy) -> (Corpus, Vec<DroppedInstance>) {
    // Inventory of noun-phrase values across the corpus, keyed by first token
    // for cheap candidate lookup. BTreeMap keeps the match order (and thus the
    // reported value) deterministic.
    let mut inventory: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for inst in &corpus.instances {
        for slot in &inst.mr.slots {
            if classify_slot(slot) == SlotClass::NounPhrase {
                let toks = tokenize(&slot.value);
                if !toks.is_empty() {
                    inventory.insert(toks.join(" "), toks);
                }
            }
        }
    }
    let mut by_first: HashMap<&str, Vec<(&String, &Vec<String>)>> = HashMap::new();
    for (value, toks) in &inventory {
        by_first.entry(toks[0].as_str()).or_default().push((value, toks));
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for inst in &corpus.instances {
        // Use stored delex results when the corpus went through
        // delexicalize_corpus; otherwise align on the fly.
        let (delex, alignment) = match (&inst.delex_main_reference, &inst.alignment) {
            (Some(d), Some(a)) => (d.clone(), a.clone()),
            _ => delexicalize(inst.main_reference(), &inst.mr),
        };

        if alignment.realized_count() < policy.min_realized_slots {
            dropped.push(DroppedInstance {
                instance: inst.clone(),
                reason: "no slot realized".to_string(),
            });
            continue;
        }

        if policy.reject_foreign_values {
            let own: HashSet<String> = inst
                .mr
                .slots
                .iter()
                .map(|s| tokenize(&s.value).join(" "))
                .collect();
            let delex_tokens = split_tokens(&delex);
            if let Some(value) = find_foreign(&delex_tokens, &by_first, &own) {
                dropped.push(DroppedInstance {
                    instance: inst.clone(),
                    reason: format!("unaligned noun phrase: {value}"),
                });
                continue;
            }
        }
        kept.push(inst.clone());
    }
    (Corpus::new(corpus.name.clone(), kept), dropped)
}

/// First corpus noun-phrase value (left-to-right in the text, then in sorted
/// value order) that occurs in `tokens` without belonging to `own`.
fn find_foreign(
    tokens: &[&str],
    by_first: &HashMap<&str, Vec<(&String, &Vec<String>)>>,
    own: &HashSet<String>,
) -> Option<String> {
    for start in 0..tokens.len() {
        let Some(candidates) = by_first.get(tokens[start]) else {
            continue;
        };
        for (value, vtoks) in candidates {
            if own.contains(value.as_str()) {
                continue;
            }
            if start + vtoks.len() <= tokens.len()
                && tokens[start..start + vtoks.len()]
                    .iter()
                    .zip(vtoks.iter())
                    .all(|(a, b)| *a == b)
            {
                return Some((*value).clone());
            }
        }
    }
    None
}

// ── Template augmentation ───────────────────────────────────────────────────

/// Enlarge each instance's reference set with the group's other delexicalized
/// answers, relexicalized with the instance's own slot values. Templates whose
/// placeholders the MR cannot satisfy are skipped; duplicates are not added;
/// the main reference stays at position 0.
pub fn augment(group: &[Instance]) -> Vec<Instance> {
    let templates: Vec<&str> = group
        .iter()
        .filter_map(|i| i.delex_main_reference.as_deref())
        .collect();
    group
        .iter()
        .map(|inst| {
            let mut out = inst.clone();
            for template in &templates {
                if let Ok(text) = relexicalize(template, &inst.mr) {
                    if !out.references.contains(&text) {
                        out.references.push(text);
                    }
                }
            }
            out
        })
        .collect()
}

// ── Group-disjoint splits ───────────────────────────────────────────────────

/// Split a corpus into train/dev/test without separating question groups.
/// Groups are shuffled by `seed`, then the two boundaries are placed where the
/// cumulative instance counts come closest to the requested ratios. Instances
/// keep their corpus order within each part.
pub fn split_by_group(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    let (r_train, r_dev, r_test) = ratios;
    if r_train <= 0.0 || r_dev <= 0.0 || r_test <= 0.0 {
        return Err(Error::contract("split ratios must all be positive"));
    }
    if (r_train + r_dev + r_test - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "split ratios must sum to 1, got {:?}",
            ratios
        )));
    }
    let mut groups = corpus.groups();
    if groups.len() < 3 {
        return Err(Error::contract(format!(
            "need at least 3 groups to split, corpus has {}",
            groups.len()
        )));
    }

    let mut rng = rng::seeded(seed);
    groups.shuffle(&mut rng);

    let total: usize = groups.iter().map(|(_, idx)| idx.len()).sum();
    let prefix: Vec<usize> = groups
        .iter()
        .scan(0usize, |acc, (_, idx)| {
            *acc += idx.len();
            Some(*acc)
        })
        .collect();

    // k = number of groups assigned to a side; keep at least one group in
    // every part. First minimum wins so the cut is deterministic.
    let best_cut = |lo: usize, hi: usize, target: f64| -> usize {
        let mut best = lo;
        let mut best_err = f64::INFINITY;
        for k in lo..=hi {
            let err = (prefix[k - 1] as f64 - target).abs();
            if err < best_err {
                best_err = err;
                best = k;
            }
        }
        best
    };
    let cut1 = best_cut(1, groups.len() - 2, r_train * total as f64);
    let cut2 = best_cut(cut1 + 1, groups.len() - 1, (r_train + r_dev) * total as f64);

    let part_of: HashMap<&str, usize> = groups
        .iter()
        .enumerate()
        .map(|(i, (gid, _))| {
            let part = if i < cut1 {
                0
            } else if i < cut2 {
                1
            } else {
                2
            };
            (gid.as_str(), part)
        })
        .collect();

    let mut parts: [Vec<Instance>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for inst in &corpus.instances {
        parts[part_of[inst.group_id.as_str()]].push(inst.clone());
    }
    let [train, dev, test] = parts;
    Ok((
        Corpus::new(format!("{}-train", corpus.name), train),
        Corpus::new(format!("{}-dev", corpus.name), dev),
        Corpus::new(format!("{}-test", corpus.name), test),
    ))
}

// ── Progressive ontology partitions ─────────────────────────────────────────

/// Build nested sub-corpora restricted to progressively larger slot-type
/// inventories. Types are ranked by corpus frequency (ties lexicographic);
/// partition k keeps exactly the instances whose slot types all fall within
/// the top `spec.sizes[k]` types.
pub fn make_partitions(corpus: &Corpus, spec: &PartitionSpec) -> Result<Vec<Corpus>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in &corpus.instances {
        for slot in &inst.mr.slots {
            *counts.entry(slot.slot_type.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut partitions = Vec::new();
    for &size in &spec.sizes {
        if size > ranked.len() {
            return Err(Error::contract(format!(
                "partition size {size} exceeds the {} slot types in the corpus",
                ranked.len()
            )));
        }
        let allowed: HashSet<&str> = ranked[..size].iter().map(|(t, _)| *t).collect();
        let instances: Vec<Instance> = corpus
            .instances
            .iter()
            .filter(|inst| {
                inst.mr
                    .slots
                    .iter()
                    .all(|s| allowed.contains(s.slot_type.as_str()))
            })
            .cloned()
            .collect();
        partitions.push(Corpus::new(format!("{}-p{}", corpus.name, size), instances));
    }
    Ok(partitions)
}
