//! Acceptance gate for the whole toolkit. Nine checks cover gradient
//! correctness against central finite differences, the slot-error-rate and
//! BLEU oracles, pipeline integrity at corpus scale, single-task training
//! feasibility (memorization and generalization to unseen groups), the
//! multi-task sharing contract, and byte-level determinism of full runs
//! through the real binary.
//!
//! Each test prints one `PASS:` line with its measured numbers (visible with
//! `--nocapture`); on failure the assertion names the offending values.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlgen_core::data::{
    align_filter, build_vocab, delexicalize, delexicalize_corpus, make_partitions, relexicalize,
    split_by_group, synth_corpus, AlignPolicy, Corpus, Instance, MeaningRepresentation,
    PartitionSpec, Slot, SynthConfig, VocabField, Vocabulary,
};
use nlgen_core::nn::{
    AdamConfig, AdamState, BiGruEncoder, BiGruEncoderBound, Embedding, EmbeddingBound, GruCell,
    GruCellBound, Linear, LinearBound, LuongAttention, LuongAttentionBound,
};
use nlgen_core::rng::seeded;
use nlgen_core::tensor::{grad_check, Tensor, TensorId};
use nlgen_metrics::{bleu, evaluate_corpus, ser_mr, ser_mtrg, ser_trg, Metric, SerInstance};
use nlgen_model::{ModelConfig, NlgModel, Stream, UtteranceMode};
use nlgen_trainer::{train, train_step, Example, TaskData, TrainConfig};

// ── Shared fixture helpers ──────────────────────────────────────────────────

fn slot(slot_type: &str, value: &str) -> Slot {
    Slot { slot_type: slot_type.to_string(), value: value.to_string() }
}

fn mr(dialog_act: &str, slots: &[(&str, &str)]) -> MeaningRepresentation {
    MeaningRepresentation {
        dialog_act: dialog_act.to_string(),
        slots: slots.iter().map(|(t, v)| slot(t, v)).collect(),
    }
}

/// Synthesize, delexicalize and alignment-filter one corpus in memory.
fn prepared_synth(
    n_groups: usize,
    per_group: usize,
    n_slot_types: usize,
    seed: u64,
) -> Corpus {
    let config = SynthConfig {
        n_groups,
        instances_per_group: per_group,
        n_slot_types,
        with_context: true,
        noise_rate: 0.0,
    };
    let corpus = synth_corpus(&config, seed).expect("synthesis should succeed");
    let delexed = delexicalize_corpus(&corpus);
    let (kept, dropped) = align_filter(&delexed, &AlignPolicy::default());
    assert!(dropped.is_empty(), "noise-free corpus should keep every instance");
    kept
}

/// One training example per reference; the main reference uses the stored
/// delexicalization, extra references are delexicalized on the fly.
fn expand_examples(corpus: &Corpus) -> Vec<Example> {
    let mut out = Vec::new();
    for inst in &corpus.instances {
        for (i, reference) in inst.references.iter().enumerate() {
            let target = if i == 0 {
                inst.delex_main_reference.clone().expect("delexicalized corpus")
            } else {
                delexicalize(reference, &inst.mr).0
            };
            out.push(Example { instance: inst.clone(), target });
        }
    }
    out
}

fn stream_vocabs(
    corpus: &Corpus,
    streams: &[Stream],
    mode: UtteranceMode,
) -> BTreeMap<Stream, Vocabulary> {
    let mut out = BTreeMap::new();
    for &stream in streams {
        let field = match stream {
            Stream::SlotTypes => VocabField::SlotTypes,
            Stream::SlotValues => VocabField::SlotValues,
            Stream::DialogAct => VocabField::DialogAct,
            Stream::Utterance => VocabField::Context { delex: mode == UtteranceMode::Delex },
        };
        out.insert(stream, build_vocab(corpus, field).expect("vocabulary should build"));
    }
    out
}

/// Bitwise snapshot of every model parameter, keyed by parameter path.
fn param_bits(model: &NlgModel) -> BTreeMap<String, Vec<u64>> {
    model
        .params()
        .into_iter()
        .map(|(name, t)| (name, t.data.iter().map(|x| x.to_bits()).collect()))
        .collect()
}

// ═════════════════════════════════════════════════════════════════════════
// Gradient correctness
// ═════════════════════════════════════════════════════════════════════════

/// Central finite differences stay above f64 cancellation noise at this
/// width while truncation error remains far below the acceptance gate.
const FD_EPSILON: f64 = 1e-3;
const GRAD_GATE: f64 = 1e-4;

fn gru_bound(ids: &[TensorId], hidden_dim: usize) -> GruCellBound {
    GruCellBound {
        w_z: ids[0],
        u_z: ids[1],
        b_z: ids[2],
        w_r: ids[3],
        u_r: ids[4],
        b_r: ids[5],
        w_h: ids[6],
        u_h: ids[7],
        b_h: ids[8],
        hidden_dim,
    }
}

fn named_params<'a>(
    list: &'a [(String, &Tensor)],
    extra: &'a [(&'a str, Tensor)],
) -> Vec<(&'a str, Tensor)> {
    list.iter()
        .map(|(n, t)| (n.as_str(), (*t).clone()))
        .chain(extra.iter().map(|(n, t)| (*n, t.clone())))
        .collect()
}

#[test]
fn gradients_match_finite_differences_at_every_layer() {
    let started = Instant::now();
    let mut results: Vec<(&str, f64)> = Vec::new();

    // Recurrent cell: two chained steps so gradients flow through time.
    {
        let mut rng = seeded(11);
        let cell = GruCell::new(3, 4, &mut rng);
        let mut list = Vec::new();
        cell.params("cell", &mut list);
        let params = named_params(&list, &[]);
        let err = grad_check(
            &params,
            |g, ids| {
                let cell = gru_bound(ids, 4);
                let x1 = g.leaf(Tensor::matrix(&[vec![0.3, -0.7, 0.5]])?, false);
                let x2 = g.leaf(Tensor::matrix(&[vec![-0.2, 0.4, 0.9]])?, false);
                let h0 = g.leaf(Tensor::matrix(&[vec![0.1, -0.3, 0.2, 0.6]])?, false);
                let h1 = cell.step(g, x1, h0)?;
                let h2 = cell.step(g, x2, h1)?;
                let sq = g.mul(h2, h2)?;
                Ok(g.sum(sq))
            },
            FD_EPSILON,
        )
        .expect("gradient check should run");
        results.push(("gru-step", err));
    }

    // Bidirectional encoder over a three-token sequence; the loss reads both
    // the per-position states and the pooled final state.
    {
        let mut rng = seeded(13);
        let encoder = BiGruEncoder::new(3, 2, &mut rng);
        let mut list = Vec::new();
        encoder.params("enc", &mut list);
        let params = named_params(&list, &[]);
        let err = grad_check(
            &params,
            |g, ids| {
                let bound = BiGruEncoderBound {
                    fwd: gru_bound(&ids[..9], 2),
                    bwd: gru_bound(&ids[9..18], 2),
                };
                let embedded = g.leaf(
                    Tensor::matrix(&[
                        vec![0.5, -0.1, 0.8],
                        vec![-0.4, 0.7, 0.2],
                        vec![0.9, 0.3, -0.6],
                    ])?,
                    false,
                );
                let (states, final_state) = bound.encode(g, embedded)?;
                let s2 = g.mul(states, states)?;
                let f2 = g.mul(final_state, final_state)?;
                let a = g.sum(s2);
                let b = g.sum(f2);
                g.add(a, b)
            },
            FD_EPSILON,
        )
        .expect("gradient check should run");
        results.push(("bigru-encode", err));
    }

    // Attention, plain and masked, with gradients checked through the
    // projection, the query and the keys.
    {
        let mut rng = seeded(17);
        let attention = LuongAttention::new(4, 5, &mut rng);
        let mut list = Vec::new();
        attention.params("attn", &mut list);
        let query = Tensor::matrix(&[vec![0.4, -0.8, 0.1, 0.6]]).unwrap();
        let keys = Tensor::matrix(&[
            vec![0.2, 0.7, -0.3, 0.5, -0.1],
            vec![-0.6, 0.1, 0.9, -0.4, 0.3],
            vec![0.8, -0.2, 0.4, 0.1, -0.7],
        ])
        .unwrap();
        let extra = [("query", query), ("keys", keys)];
        let params = named_params(&list, &extra);
        let err = grad_check(
            &params,
            |g, ids| {
                let attn = LuongAttentionBound { w_a: ids[0] };
                let (query, keys) = (ids[1], ids[2]);
                let (ctx, weights) = attn.attend(g, query, keys)?;
                let (masked_ctx, _) =
                    attn.attend_masked(g, query, keys, &[true, false, true])?;
                let c2 = g.mul(ctx, ctx)?;
                let w2 = g.mul(weights, weights)?;
                let m2 = g.mul(masked_ctx, masked_ctx)?;
                let a = g.sum(c2);
                let b = g.sum(w2);
                let c = g.sum(m2);
                let ab = g.add(a, b)?;
                g.add(ab, c)
            },
            FD_EPSILON,
        )
        .expect("gradient check should run");
        results.push(("attention", err));
    }

    // Full decoder step: embed the previous token, attend over encoder
    // states, advance the cell, project, and take a cross-entropy loss.
    {
        let mut rng = seeded(19);
        let embedding = Embedding::new(6, 3, &mut rng);
        let attention = LuongAttention::new(4, 4, &mut rng);
        let cell = GruCell::new(7, 4, &mut rng);
        let projection = Linear::new(8, 6, &mut rng);
        let mut list = Vec::new();
        embedding.params("embed", &mut list);
        attention.params("attn", &mut list);
        cell.params("cell", &mut list);
        projection.params("proj", &mut list);
        let params = named_params(&list, &[]);
        let err = grad_check(
            &params,
            |g, ids| {
                let embed = EmbeddingBound { table: ids[0] };
                let attn = LuongAttentionBound { w_a: ids[1] };
                let cell = gru_bound(&ids[2..11], 4);
                let proj = LinearBound { w: ids[11], b: ids[12] };
                let keys = g.leaf(
                    Tensor::matrix(&[
                        vec![0.3, -0.5, 0.2, 0.8],
                        vec![-0.7, 0.4, 0.6, -0.1],
                        vec![0.1, 0.9, -0.4, 0.5],
                    ])?,
                    false,
                );
                let h_prev = g.leaf(Tensor::matrix(&[vec![0.2, -0.6, 0.4, 0.1]])?, false);
                let emb = embed.lookup(g, &[2])?;
                let (ctx, _) = attn.attend(g, h_prev, keys)?;
                let x = g.concat(&[emb, ctx], 1)?;
                let h = cell.step(g, x, h_prev)?;
                let pre = g.concat(&[h, ctx], 1)?;
                let logits = proj.forward(g, pre)?;
                g.cross_entropy(logits, &[4], &[true])
            },
            FD_EPSILON,
        )
        .expect("gradient check should run");
        results.push(("decoder-step", err));
    }

    // Whole network: every parameter of a model with all four encoder
    // streams, via the training loss on a two-instance batch.
    {
        let instances = vec![
            Instance {
                id: "toy_a".into(),
                group_id: "g_a".into(),
                context: Some("when was kentucky formed".into()),
                mr: mr(
                    "inform",
                    &[("timepoint", "1792"), ("objStr", "kentucky"), ("relStr", "formed")],
                ),
                references: vec!["kentucky formed in 1792".into()],
                delex_main_reference: None,
                delex_context: None,
                alignment: None,
            },
            Instance {
                id: "toy_b".into(),
                group_id: "g_b".into(),
                context: Some("what is the capital".into()),
                mr: mr("confirm", &[("objStr", "frankfort"), ("claStr", "capital")]),
                references: vec!["frankfort is the capital".into()],
                delex_main_reference: None,
                delex_context: None,
                alignment: None,
            },
        ];
        let corpus = delexicalize_corpus(&Corpus::new("toy", instances));
        let streams = [
            Stream::SlotTypes,
            Stream::SlotValues,
            Stream::DialogAct,
            Stream::Utterance,
        ];
        let mut config = ModelConfig::new(
            streams,
            UtteranceMode::Lex,
            ["answer".to_string()],
            2,
            23,
        );
        config.embedding_dim = 3;
        let targets = BTreeMap::from([(
            "answer".to_string(),
            build_vocab(&corpus, VocabField::Target).unwrap(),
        )]);
        let model = NlgModel::new(
            config,
            stream_vocabs(&corpus, &streams, UtteranceMode::Lex),
            targets,
        )
        .expect("toy model should build");
        let pairs: Vec<(&Instance, &str)> = corpus
            .instances
            .iter()
            .map(|inst| (inst, inst.delex_main_reference.as_deref().unwrap()))
            .collect();
        let batch = model.make_batch("answer", &pairs).unwrap();
        let err = model
            .finite_difference_check(&batch, FD_EPSILON)
            .expect("gradient check should run");
        results.push(("full-model", err));
    }

    let elapsed = started.elapsed().as_secs_f64();
    for (layer, err) in &results {
        assert!(
            *err < GRAD_GATE,
            "{layer}: max relative error {err:.3e} is not below {GRAD_GATE:.0e}"
        );
    }
    assert!(elapsed < 60.0, "gradient checks took {elapsed:.1}s, budget is 60s");
    let detail: Vec<String> =
        results.iter().map(|(l, e)| format!("{l} {e:.2e}")).collect();
    println!(
        "PASS: gradients match finite differences ({}; {elapsed:.1}s)",
        detail.join(", ")
    );
}

// ═════════════════════════════════════════════════════════════════════════
// Slot error rate: hand-counted fixture
// ═════════════════════════════════════════════════════════════════════════

#[test]
fn slot_error_rate_matches_hand_counted_fixture() {
    let mr = mr(
        "inform",
        &[
            ("timepoint", "1792"),
            ("objStr", "kentucky"),
            ("claStr", "state"),
            ("relStr", "founded"),
        ],
    );
    let (short_ref, _) = delexicalize("1792", &mr);
    assert_eq!(short_ref, "TIMEPOINT_1");
    let (long_ref, _) = delexicalize("kentucky was formed in 1792", &mr);
    assert_eq!(long_ref, "OBJSTR_1 was formed in TIMEPOINT_1");
    let (output, _) = delexicalize("kentucky formed in 1792", &mr);

    // The answer alone realizes one of four MR slots: three misses out of
    // four expectations.
    let against_mr = ser_mr(&short_ref, &mr);
    assert_eq!(
        (against_mr.p, against_mr.q, against_mr.n),
        (3, 0, 4),
        "ser_mr counts: {against_mr:?}"
    );
    assert_eq!(against_mr.score, Some(0.75));

    // Against the reference it reproduces, the same answer is perfect.
    let against_target = ser_trg(&short_ref, &short_ref, &mr);
    assert_eq!(
        (against_target.p, against_target.q, against_target.n),
        (0, 0, 1),
        "ser_trg counts: {against_target:?}"
    );
    assert_eq!(against_target.score, Some(0.0));

    // Against the union of both references nothing is redundant: the output
    // realizes entity and date, both of which some reference realizes.
    let references = vec![short_ref, long_ref];
    let against_union = ser_mtrg(&output, &references, &mr);
    assert_eq!(
        (against_union.p, against_union.q, against_union.n),
        (0, 0, 2),
        "ser_mtrg counts: {against_union:?}"
    );
    assert_eq!(against_union.score, Some(0.0));

    println!("PASS: slot error rate reproduces the hand-counted fixture (0.75, 0.0, 0.0)");
}

// ═════════════════════════════════════════════════════════════════════════
// Slot error rate: brute-force equivalence on random triples
// ═════════════════════════════════════════════════════════════════════════

/// Independent slot-realization oracle. It re-derives the counting contract
/// from scratch: placeholder tokens are recognized by shape, lexical slot
/// values by exhaustive (not greedy) enumeration of non-overlapping token
/// matches, and the three rates are assembled directly from the counted
/// multisets.
mod oracle {
    use std::collections::{BTreeMap, BTreeSet};

    use nlgen_core::data::MeaningRepresentation;
    use nlgen_metrics::SerInstance;

    fn type_key(slot_type: &str) -> String {
        slot_type
            .chars()
            .filter(char::is_ascii_alphanumeric)
            .collect::<String>()
            .to_lowercase()
    }

    /// Lowercased word sequence with punctuation (except `'`, `-`, `_`)
    /// split off as standalone tokens.
    fn value_words(text: &str) -> Vec<String> {
        let mut spaced = String::new();
        for c in text.to_lowercase().chars() {
            if c.is_ascii_punctuation() && !matches!(c, '\'' | '-' | '_') {
                spaced.push(' ');
                spaced.push(c);
                spaced.push(' ');
            } else {
                spaced.push(c);
            }
        }
        spaced.split_whitespace().map(str::to_string).collect()
    }

    /// `TYPE_k` placeholders: an uppercase alphanumeric head starting with a
    /// letter-case letter, an underscore, and a digit tail.
    fn placeholder_key(token: &str) -> Option<String> {
        let (head, tail) = token.rsplit_once('_')?;
        let head_ok = head
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_uppercase())
            && head.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        let tail_ok = !tail.is_empty() && tail.chars().all(|c| c.is_ascii_digit());
        (head_ok && tail_ok).then(|| head.to_lowercase())
    }

    /// Does this slot stay lexical in text (relations and polarity answers)
    /// rather than being delexicalized into a placeholder?
    fn is_lexical(slot_type: &str, value: &str) -> bool {
        let key = type_key(slot_type);
        if key.starts_with("rel") || key == "r" {
            return true;
        }
        let value = value_words(value).join(" ");
        matches!(value.as_str(), "yes" | "no")
            || value.ends_with("polarity")
            || matches!(key.as_str(), "true" | "false" | "polarity")
    }

    /// Maximum number of non-overlapping occurrences of `needle`, by
    /// exhaustive branch-and-take enumeration over every alignment.
    fn max_occurrences(tokens: &[&str], needle: &[String]) -> usize {
        if needle.is_empty() || tokens.len() < needle.len() {
            return 0;
        }
        let skip_here = max_occurrences(&tokens[1..], needle);
        let matches_here = tokens[..needle.len()]
            .iter()
            .zip(needle)
            .all(|(a, b)| *a == b);
        if matches_here {
            skip_here.max(1 + max_occurrences(&tokens[needle.len()..], needle))
        } else {
            skip_here
        }
    }

    /// Realized slot counts of a delex-space text: every placeholder token
    /// counts toward its type; every lexical slot counts its value matches.
    pub fn realized(text: &str, mr: &MeaningRepresentation) -> BTreeMap<String, usize> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for token in &tokens {
            if let Some(key) = placeholder_key(token) {
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        for slot in &mr.slots {
            if !is_lexical(&slot.slot_type, &slot.value) {
                continue;
            }
            let found = max_occurrences(&tokens, &value_words(&slot.value));
            if found > 0 {
                *counts.entry(type_key(&slot.slot_type)).or_insert(0) += found;
            }
        }
        counts
    }

    fn clipped(
        expected: &BTreeMap<String, usize>,
        found: &BTreeMap<String, usize>,
    ) -> (usize, usize) {
        let keys: BTreeSet<&String> = expected.keys().chain(found.keys()).collect();
        let mut missing = 0;
        let mut redundant = 0;
        for key in keys {
            let e = expected.get(key).copied().unwrap_or(0);
            let f = found.get(key).copied().unwrap_or(0);
            missing += e.saturating_sub(f);
            redundant += f.saturating_sub(e);
        }
        (missing, redundant)
    }

    fn instance(p: usize, q: usize, n: usize) -> SerInstance {
        SerInstance { p, q, n, score: (n > 0).then(|| (p + q) as f64 / n as f64) }
    }

    pub fn ser_mr(output: &str, mr: &MeaningRepresentation) -> SerInstance {
        let mut expected: BTreeMap<String, usize> = BTreeMap::new();
        for slot in &mr.slots {
            *expected.entry(type_key(&slot.slot_type)).or_insert(0) += 1;
        }
        let (p, q) = clipped(&expected, &realized(output, mr));
        instance(p, q, mr.slots.len())
    }

    pub fn ser_trg(output: &str, main_reference: &str, mr: &MeaningRepresentation) -> SerInstance {
        let expected = realized(main_reference, mr);
        let n = expected.values().sum();
        let (p, q) = clipped(&expected, &realized(output, mr));
        instance(p, q, n)
    }

    pub fn ser_mtrg(
        output: &str,
        references: &[String],
        mr: &MeaningRepresentation,
    ) -> SerInstance {
        let mut union: BTreeSet<String> = BTreeSet::new();
        for reference in references {
            union.extend(realized(reference, mr).into_keys());
        }
        let extra = realized(output, mr)
            .keys()
            .filter(|k| !union.contains(*k))
            .count();
        instance(extra, 0, union.len())
    }
}

#[test]
fn slot_error_rates_match_brute_force_enumeration_on_random_triples() {
    const SLOT_TYPES: [&str; 10] = [
        "objStr", "claStr", "relStr", "timepoint", "r", "polarity", "TRUE", "rel time",
        "place name", "count",
    ];
    const VALUES: [&str; 12] = [
        "kentucky",
        "frankfort",
        "1792",
        "yes",
        "no",
        "formed",
        "was formed in",
        "blue-grass",
        "",
        "new york city",
        "negative polarity",
        "42",
    ];
    // Texts mix ordinary words, value fragments, well-formed placeholders and
    // tokens that merely look like placeholders.
    const TOKENS: [&str; 28] = [
        "the", "state", "of", "in", "was", "formed", "kentucky", "1792", "yes", "capital",
        "a", ",", "is", "new", "OBJSTR_1", "OBJSTR_2", "CLASTR_1", "RELSTR_1", "TIMEPOINT_1",
        "R_1", "TRUE_1", "RELTIME_1", "PLACENAME_1", "COUNT_3", "BAD-1", "lower_1", "X_",
        "_1",
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    let random_text = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.random_range(0..=10);
        let mut words: Vec<String> = Vec::new();
        for _ in 0..len {
            if rng.random_range(0..5) == 0 {
                // Splice a whole slot value in, so multi-word matches occur.
                let value = VALUES[rng.random_range(0..VALUES.len())];
                words.extend(value.split_whitespace().map(str::to_string));
            } else {
                words.push(TOKENS[rng.random_range(0..TOKENS.len())].to_string());
            }
        }
        words.join(" ")
    };

    let mut checked = 0usize;
    for triple in 0..1000 {
        let n_slots = rng.random_range(0..=5);
        let slots: Vec<(String, String)> = (0..n_slots)
            .map(|_| {
                (
                    SLOT_TYPES[rng.random_range(0..SLOT_TYPES.len())].to_string(),
                    VALUES[rng.random_range(0..VALUES.len())].to_string(),
                )
            })
            .collect();
        let slot_refs: Vec<(&str, &str)> =
            slots.iter().map(|(t, v)| (t.as_str(), v.as_str())).collect();
        let mr = mr("inform", &slot_refs);
        let output = random_text(&mut rng);
        let n_refs = rng.random_range(1..=3);
        let references: Vec<String> =
            (0..n_refs).map(|_| random_text(&mut rng)).collect();

        let same = |a: &SerInstance, b: &SerInstance| {
            (a.p, a.q, a.n, a.score) == (b.p, b.q, b.n, b.score)
        };
        let blame = |variant: &str, got: &SerInstance, want: &SerInstance| {
            format!(
                "triple {triple} {variant}: got {got:?}, oracle {want:?}\n  \
                 output: {output:?}\n  references: {references:?}\n  mr: {mr:?}"
            )
        };

        let got = ser_mr(&output, &mr);
        let want = oracle::ser_mr(&output, &mr);
        assert!(same(&got, &want), "{}", blame("ser_mr", &got, &want));

        let got = ser_trg(&output, &references[0], &mr);
        let want = oracle::ser_trg(&output, &references[0], &mr);
        assert!(same(&got, &want), "{}", blame("ser_trg", &got, &want));

        let got = ser_mtrg(&output, &references, &mr);
        let want = oracle::ser_mtrg(&output, &references, &mr);
        assert!(same(&got, &want), "{}", blame("ser_mtrg", &got, &want));

        checked += 1;
    }
    assert_eq!(checked, 1000);
    println!("PASS: all three slot error rates match exhaustive enumeration on 1000 random triples");
}

// ═════════════════════════════════════════════════════════════════════════
// BLEU oracles and invariances
// ═════════════════════════════════════════════════════════════════════════

#[test]
fn bleu_matches_hand_computed_oracles_and_is_order_invariant() {
    let hyps: Vec<String> = vec![
        "the cat sat on the mat".into(),
        "a b c d".into(),
        "kentucky formed in 1792".into(),
    ];
    let refs: Vec<Vec<String>> = vec![
        vec!["the cat sat on the mat".into()],
        vec!["a b c e d".into()],
        vec!["kentucky was formed in 1792".into()],
    ];

    // A corpus scored against itself is perfect, exactly.
    let self_refs: Vec<Vec<String>> = hyps.iter().map(|h| vec![h.clone()]).collect();
    let identity = bleu(&hyps, &self_refs).unwrap();
    assert_eq!(identity.score, 1.0, "identity corpus: {identity:?}");

    // Two-instance fixture, worked out by hand: clipped n-gram matches
    // 10+7+5+3 over totals 10+8+6+4, hypothesis length 10 against reference
    // length 11.
    let pair = bleu(&hyps[..2], &refs[..2]).unwrap();
    assert_eq!(pair.matched, [10, 7, 5, 3], "matched n-grams: {pair:?}");
    assert_eq!(pair.total, [10, 8, 6, 4], "total n-grams: {pair:?}");
    assert_eq!((pair.hyp_len, pair.ref_len), (10, 11));
    let expected_bp = (1.0f64 - 11.0 / 10.0).exp();
    let expected =
        expected_bp * (1.0f64 * (7.0 / 8.0) * (5.0 / 6.0) * (3.0 / 4.0)).powf(0.25);
    assert!(
        (pair.brevity_penalty - expected_bp).abs() < 1e-9,
        "brevity penalty {} vs {expected_bp}",
        pair.brevity_penalty
    );
    assert!(
        (pair.score - expected).abs() < 1e-9,
        "two-instance corpus: {} vs {expected}",
        pair.score
    );
    assert!((pair.score - 0.7781128176625941).abs() < 1e-9);

    // Single pair with a shared 3-gram but no shared 4-gram: precisions are
    // exact small fractions and the geometric mean collapses to zero.
    let single = bleu(&hyps[2..3], &refs[2..3]).unwrap();
    for (i, want) in [1.0, 2.0 / 3.0, 0.5, 0.0].into_iter().enumerate() {
        assert!(
            (single.precisions[i] - want).abs() < 1e-9,
            "precision {}: {} vs {want}",
            i + 1,
            single.precisions[i]
        );
    }
    assert_eq!(single.score, 0.0);

    // Instance order never matters: counts are pooled before any division.
    let base = bleu(&hyps, &refs).unwrap();
    let permuted_hyps: Vec<String> = vec![hyps[2].clone(), hyps[0].clone(), hyps[1].clone()];
    let permuted_refs: Vec<Vec<String>> =
        vec![refs[2].clone(), refs[0].clone(), refs[1].clone()];
    let permuted = bleu(&permuted_hyps, &permuted_refs).unwrap();
    assert_eq!(permuted.score, base.score, "permutation changed the score");

    // Duplicating the whole corpus scales every count by two and leaves the
    // score bit-identical.
    let doubled_hyps: Vec<String> = hyps.iter().chain(hyps.iter()).cloned().collect();
    let doubled_refs: Vec<Vec<String>> = refs.iter().chain(refs.iter()).cloned().collect();
    let doubled = bleu(&doubled_hyps, &doubled_refs).unwrap();
    assert_eq!(doubled.score, base.score, "duplication changed the score");

    println!(
        "PASS: bleu matches hand-computed fixtures ({:.16}) and is order/duplication invariant",
        pair.score
    );
}

// ═════════════════════════════════════════════════════════════════════════
// Pipeline integrity at corpus scale
// ═════════════════════════════════════════════════════════════════════════

#[test]
fn pipeline_round_trips_and_splits_cleanly_at_scale() {
    let kept = prepared_synth(50, 10, 7, 20_260_816);
    assert_eq!(kept.len(), 500, "noise-free synthesis should keep all 500 instances");

    // Every kept instance's delexicalization must substitute back into the
    // exact original text, references and contexts alike.
    let mut round_trips = 0usize;
    for inst in &kept.instances {
        let delex = inst.delex_main_reference.as_ref().expect("kept instances are delexicalized");
        let back = relexicalize(delex, &inst.mr).expect("kept instances must relexicalize");
        assert_eq!(back, inst.references[0], "reference round-trip for {}", inst.id);
        if let (Some(delex_ctx), Some(ctx)) = (&inst.delex_context, &inst.context) {
            let back = relexicalize(delex_ctx, &inst.mr).expect("context must relexicalize");
            assert_eq!(&back, ctx, "context round-trip for {}", inst.id);
        }
        round_trips += 1;
    }
    assert_eq!(round_trips, kept.len());

    // Group-based splits never share a group across parts and lose nothing.
    let (train, dev, test) = split_by_group(&kept, (0.8, 0.1, 0.1), 7).unwrap();
    assert_eq!(train.len() + dev.len() + test.len(), kept.len());
    let groups = |c: &Corpus| -> BTreeSet<String> {
        c.instances.iter().map(|i| i.group_id.clone()).collect()
    };
    let (g_train, g_dev, g_test) = (groups(&train), groups(&dev), groups(&test));
    assert!(g_train.is_disjoint(&g_dev), "train and dev share groups");
    assert!(g_train.is_disjoint(&g_test), "train and test share groups");
    assert!(g_dev.is_disjoint(&g_test), "dev and test share groups");

    // Ontology partitions grow by construction: each one's instances are a
    // subset of the next's.
    let spec = PartitionSpec::new(vec![5, 6, 7]).unwrap();
    let parts = make_partitions(&kept, &spec).unwrap();
    assert_eq!(parts.len(), 3);
    let ids = |c: &Corpus| -> BTreeSet<String> {
        c.instances.iter().map(|i| i.id.clone()).collect()
    };
    for pair in parts.windows(2) {
        assert!(
            ids(&pair[0]).is_subset(&ids(&pair[1])),
            "partition {:?} is not nested in {:?}",
            pair[0].name,
            pair[1].name
        );
    }
    assert_eq!(parts[2].len(), kept.len(), "the full ontology should keep everything");

    println!(
        "PASS: 500/500 instances round-trip; splits {}/{}/{} are group-disjoint; partitions {} ⊆ {} ⊆ {}",
        train.len(),
        dev.len(),
        test.len(),
        parts[0].len(),
        parts[1].len(),
        parts[2].len()
    );
}

// ═════════════════════════════════════════════════════════════════════════
// Memorization: the context model overfits a small corpus
// ═════════════════════════════════════════════════════════════════════════

#[test]
fn context_model_overfits_a_small_corpus() {
    let started = Instant::now();
    let kept = prepared_synth(5, 10, 6, 42);
    assert_eq!(kept.len(), 50);
    assert!(
        kept.ontology().len() <= 20,
        "slot-type inventory {} exceeds the fixture bound",
        kept.ontology().len()
    );

    let streams = [Stream::SlotTypes, Stream::SlotValues, Stream::Utterance];
    let config = ModelConfig::new(
        streams,
        UtteranceMode::Lex,
        ["answer".to_string()],
        64,
        3,
    );
    let target_vocab = build_vocab(&kept, VocabField::Target).unwrap();
    assert!(
        target_vocab.len() < 150,
        "target vocabulary has {} entries, fixture expects < 150",
        target_vocab.len()
    );
    let mut model = NlgModel::new(
        config,
        stream_vocabs(&kept, &streams, UtteranceMode::Lex),
        BTreeMap::from([("answer".to_string(), target_vocab)]),
    )
    .unwrap();

    let examples = expand_examples(&kept);
    let datasets = BTreeMap::from([(
        "answer".to_string(),
        TaskData { train: examples.clone(), dev: examples.clone() },
    )]);
    let train_config = TrainConfig {
        batch_size: 16,
        max_epochs: 300,
        learning_rate: 0.005,
        patience: 60,
        min_delta: 1e-6,
        eval_every: 1,
        clip_norm: Some(5.0),
        seed: 1,
    };
    let history = train(&mut model, &datasets, &train_config).unwrap();
    let epochs_run = history.epochs.len();
    assert!(epochs_run <= 300);

    // Teacher-forced token accuracy over the whole training set.
    let pairs: Vec<(&Instance, &str)> =
        examples.iter().map(|e| (&e.instance, e.target.as_str())).collect();
    let batch = model.make_batch("answer", &pairs).unwrap();
    let accuracy = model.token_accuracy(&batch).unwrap();
    assert!(
        accuracy >= 0.99,
        "train token accuracy {accuracy:.4} after {epochs_run} epochs, need >= 0.99"
    );

    // Free-running greedy decoding must reproduce at least 90% of the
    // training references verbatim.
    let mut exact = 0usize;
    for inst in &kept.instances {
        let hyp = model.decode_greedy("answer", inst).unwrap();
        if inst.delex_main_reference.as_deref() == Some(hyp.text().as_str()) {
            exact += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        exact * 10 >= kept.len() * 9,
        "greedy decoding reproduced {exact}/{} references, need >= 90%",
        kept.len()
    );
    assert!(elapsed < 600.0, "memorization run took {elapsed:.0}s, budget is 600s");

    println!(
        "PASS: memorized 50-instance corpus in {epochs_run} epochs \
         (token accuracy {accuracy:.4}, exact decodes {exact}/50, {elapsed:.0}s)"
    );
}

// ═════════════════════════════════════════════════════════════════════════
// Generalization to unseen groups
// ═════════════════════════════════════════════════════════════════════════

#[test]
fn context_model_generalizes_to_unseen_groups() {
    let started = Instant::now();
    let kept = prepared_synth(50, 10, 7, 9);
    assert_eq!(kept.len(), 500);
    let (train_corpus, dev_corpus, test_corpus) =
        split_by_group(&kept, (0.8, 0.1, 0.1), 5).unwrap();

    // Vocabularies come from the training split alone; unseen groups keep
    // their entity words out of every table.
    let streams = [Stream::SlotTypes, Stream::SlotValues, Stream::Utterance];
    let config = ModelConfig::new(
        streams,
        UtteranceMode::Lex,
        ["answer".to_string()],
        64,
        11,
    );
    let mut model = NlgModel::new(
        config,
        stream_vocabs(&train_corpus, &streams, UtteranceMode::Lex),
        BTreeMap::from([(
            "answer".to_string(),
            build_vocab(&train_corpus, VocabField::Target).unwrap(),
        )]),
    )
    .unwrap();

    let datasets = BTreeMap::from([(
        "answer".to_string(),
        TaskData {
            train: expand_examples(&train_corpus),
            dev: expand_examples(&dev_corpus),
        },
    )]);
    let train_config = TrainConfig {
        batch_size: 32,
        max_epochs: 60,
        learning_rate: 0.003,
        patience: 8,
        min_delta: 1e-5,
        eval_every: 1,
        clip_norm: Some(5.0),
        seed: 2,
    };
    let history = train(&mut model, &datasets, &train_config).unwrap();

    // Decode the unseen-group test split and score it in lexical space.
    let outputs: Vec<String> = test_corpus
        .instances
        .iter()
        .map(|inst| {
            let text = model.decode_greedy("answer", inst).unwrap().text();
            relexicalize(&text, &inst.mr).unwrap_or(text)
        })
        .collect();
    let report =
        evaluate_corpus(&outputs, &test_corpus, &[Metric::Bleu, Metric::SerTrg]).unwrap();
    let bleu_score = report.bleu.as_ref().unwrap().score;
    let ser = report.ser.get("ser_trg").unwrap().micro.unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    assert!(
        ser < 0.5,
        "test ser_trg micro {ser:.4} after {} epochs, need < 0.5",
        history.epochs.len()
    );
    assert!(bleu_score > 0.3, "test bleu {bleu_score:.4}, need > 0.3");
    assert!(elapsed < 1800.0, "generalization run took {elapsed:.0}s, budget is 1800s");

    println!(
        "PASS: generalized to {} unseen-group instances (ser_trg micro {ser:.4}, bleu {bleu_score:.4}, {} epochs, {elapsed:.0}s)",
        test_corpus.len(),
        history.epochs.len()
    );
}

// ═════════════════════════════════════════════════════════════════════════
// Multi-task training: alternation, sharing, and joint progress
// ═════════════════════════════════════════════════════════════════════════

#[test]
fn multi_task_training_alternates_and_shares_encoders_only() {
    let kept = prepared_synth(15, 4, 6, 13);
    let (train_corpus, dev_corpus, _) = split_by_group(&kept, (0.8, 0.1, 0.1), 3).unwrap();

    // Two tasks over the same meaning representations: generate the answer,
    // and generate the question that elicited it. The question must not be
    // fed back in as an input stream.
    let streams = [Stream::SlotTypes, Stream::SlotValues, Stream::DialogAct];
    let mut config = ModelConfig::new(
        streams,
        UtteranceMode::None,
        ["answer".to_string(), "question".to_string()],
        32,
        7,
    );
    config.embedding_dim = 32;
    let target_vocabs = BTreeMap::from([
        (
            "answer".to_string(),
            build_vocab(&train_corpus, VocabField::Target).unwrap(),
        ),
        (
            "question".to_string(),
            build_vocab(&train_corpus, VocabField::Context { delex: true }).unwrap(),
        ),
    ]);
    let vocabs = stream_vocabs(&train_corpus, &streams, UtteranceMode::None);
    let mut model = NlgModel::new(config, vocabs, target_vocabs).unwrap();

    let question_examples = |corpus: &Corpus| -> Vec<Example> {
        corpus
            .instances
            .iter()
            .map(|inst| Example {
                instance: inst.clone(),
                target: inst.delex_context.clone().expect("synthesis attaches contexts"),
            })
            .collect()
    };
    let datasets = BTreeMap::from([
        (
            "answer".to_string(),
            TaskData {
                train: expand_examples(&train_corpus),
                dev: expand_examples(&dev_corpus),
            },
        ),
        (
            "question".to_string(),
            TaskData {
                train: question_examples(&train_corpus),
                dev: question_examples(&dev_corpus),
            },
        ),
    ]);

    // Single optimizer steps expose the ownership boundary bitwise: a step
    // on one task may touch shared encoders and its own decoder, never the
    // other task's decoder.
    {
        let mut probe = model.clone();
        let mut adam = AdamState::new(AdamConfig::default());
        let before = param_bits(&probe);
        let answer_data = &datasets["answer"].train;
        let pairs: Vec<(&Instance, &str)> = answer_data
            .iter()
            .take(8)
            .map(|e| (&e.instance, e.target.as_str()))
            .collect();
        let batch = probe.make_batch("answer", &pairs).unwrap();
        train_step(&mut probe, &mut adam, &batch, Some(5.0)).unwrap();
        let after_answer = param_bits(&probe);

        let changed = |a: &BTreeMap<String, Vec<u64>>,
                       b: &BTreeMap<String, Vec<u64>>,
                       prefix: &str| {
            a.iter().filter(|(name, bits)| name.starts_with(prefix) && *bits != &b[*name]).count()
        };
        assert!(
            changed(&after_answer, &before, "encoder.") > 0,
            "an answer step should update shared encoder parameters"
        );
        assert!(
            changed(&after_answer, &before, "task.answer.") > 0,
            "an answer step should update the answer decoder"
        );
        assert_eq!(
            changed(&after_answer, &before, "task.question."),
            0,
            "an answer step must leave the question decoder bitwise untouched"
        );

        let question_data = &datasets["question"].train;
        let pairs: Vec<(&Instance, &str)> = question_data
            .iter()
            .take(8)
            .map(|e| (&e.instance, e.target.as_str()))
            .collect();
        let batch = probe.make_batch("question", &pairs).unwrap();
        train_step(&mut probe, &mut adam, &batch, Some(5.0)).unwrap();
        let after_question = param_bits(&probe);
        assert!(
            changed(&after_question, &after_answer, "encoder.") > 0,
            "a question step should update shared encoder parameters"
        );
        assert!(
            changed(&after_question, &after_answer, "task.question.") > 0,
            "a question step should update the question decoder"
        );
        assert_eq!(
            changed(&after_question, &after_answer, "task.answer."),
            0,
            "a question step must leave the answer decoder bitwise untouched"
        );
    }

    // A full run: batches alternate so evenly that per-epoch consumption
    // differs by at most one, and both tasks' dev losses improve from the
    // first epoch to the best one.
    let train_config = TrainConfig {
        batch_size: 16,
        max_epochs: 25,
        learning_rate: 0.005,
        patience: 25,
        min_delta: 1e-6,
        eval_every: 1,
        clip_norm: Some(5.0),
        seed: 4,
    };
    let history = train(&mut model, &datasets, &train_config).unwrap();
    for record in &history.epochs {
        let answer_batches = record.batches["answer"] as i64;
        let question_batches = record.batches["question"] as i64;
        assert!(answer_batches > 0 && question_batches > 0);
        assert!(
            (answer_batches - question_batches).abs() <= 1,
            "epoch {}: task batch counts {answer_batches} vs {question_batches}",
            record.epoch
        );
    }
    let best = history.best_epoch.expect("training should find a best epoch");
    assert!(best >= 1, "no epoch improved on the first one");
    let first = &history.epochs[0];
    let best = &history.epochs[best];
    for task in ["answer", "question"] {
        assert!(
            best.dev_loss[task] < first.dev_loss[task],
            "{task} dev loss did not improve: {} -> {}",
            first.dev_loss[task],
            best.dev_loss[task]
        );
    }

    println!(
        "PASS: multi-task run alternates evenly and shares only encoders \
         (answer dev {:.3} -> {:.3}, question dev {:.3} -> {:.3})",
        first.dev_loss["answer"],
        best.dev_loss["answer"],
        first.dev_loss["question"],
        best.dev_loss["question"]
    );
}

// ═════════════════════════════════════════════════════════════════════════
// Byte-identical end-to-end runs
// ═════════════════════════════════════════════════════════════════════════

fn run_cli(dir: &Path, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_nlgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should run");
    assert_eq!(
        output.status.code(),
        Some(0),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

/// One full pipeline pass — synthesize, prepare, train, generate, evaluate —
/// run inside `dir`. Both runs see the exact same command lines; only the
/// working directory differs, so any machine- or location-specific leak into
/// an artifact shows up as a byte difference.
fn full_pipeline(dir: &Path) {
    run_cli(dir, &[
        "synth",
        "--out", "corpus.jsonl",
        "--groups", "12",
        "--per-group", "5",
        "--slot-types", "6",
        "--seed", "7",
    ]);
    run_cli(dir, &[
        "prepare",
        "--in", "corpus.jsonl",
        "--out", "prep",
        "--split", "70,15,15",
        "--seed", "3",
    ]);
    run_cli(dir, &[
        "train",
        "--data", "answer=prep",
        "--out", "run",
        "--encoders", "slot_types,slot_values,dialog_act",
        "--embedding-dim", "16",
        "--hidden-dim", "16",
        "--max-decode-len", "12",
        "--batch-size", "16",
        "--learning-rate", "0.01",
        "--max-epochs", "20",
        "--patience", "30",
        "--model-seed", "5",
        "--train-seed", "6",
    ]);
    run_cli(dir, &[
        "generate",
        "--model", "run",
        "--in", "prep/test.jsonl",
        "--out", "outputs.jsonl",
        "--decode", "beam:2",
    ]);
    run_cli(dir, &[
        "evaluate",
        "--outputs", "outputs.jsonl",
        "--corpus", "prep/test.jsonl",
        "--report", "report.txt",
    ]);
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let base = std::env::temp_dir().join(format!("nlgen-accept-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let (dir_a, dir_b) = (base.join("a"), base.join("b"));
    std::fs::create_dir_all(&dir_a).unwrap();
    std::fs::create_dir_all(&dir_b).unwrap();

    full_pipeline(&dir_a);
    full_pipeline(&dir_b);

    let artifacts = [
        "corpus.jsonl",
        "prep/train.jsonl",
        "prep/dev.jsonl",
        "prep/test.jsonl",
        "prep/dropped.jsonl",
        "prep/manifest.txt",
        "run/model.json",
        "run/manifest.txt",
        "outputs.jsonl",
        "report.txt",
    ];
    for artifact in artifacts {
        let a = std::fs::read(dir_a.join(artifact))
            .unwrap_or_else(|e| panic!("first run is missing {artifact}: {e}"));
        let b = std::fs::read(dir_b.join(artifact))
            .unwrap_or_else(|e| panic!("second run is missing {artifact}: {e}"));
        assert!(a == b, "{artifact} differs between identically-seeded runs");
    }

    // The history is identical too once wall-clock timings (its only
    // non-deterministic field) are masked out.
    let masked_history = |dir: &Path| -> serde_json::Value {
        let raw = std::fs::read_to_string(dir.join("run/history.json")).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&raw).unwrap();
        for epoch in value["epochs"].as_array_mut().expect("history has epochs") {
            epoch["wall_secs"] = serde_json::Value::from(0.0);
        }
        value
    };
    assert_eq!(
        masked_history(&dir_a),
        masked_history(&dir_b),
        "training histories differ beyond wall-clock timings"
    );

    println!(
        "PASS: two identically-seeded pipeline runs produced {} byte-identical artifacts",
        artifacts.len()
    );
}
