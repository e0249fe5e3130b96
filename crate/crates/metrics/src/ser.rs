//! Slot error rates. Three variants share one counting rule and differ only
//! in the expected-slot basis: the MR itself, the main reference, or the
//! union of all references (which penalizes redundancy only).
//!
//! Counting is multiset-per-type with clipping: for each slot type, missing
//! is max(0, expected − found) and redundant is max(0, found − expected).
//! Instances whose denominator is zero have no defined score; they are
//! reported as skipped and excluded from both aggregates.

use serde::{Deserialize, Serialize};

use nlgen_core::data::MeaningRepresentation;

use crate::realize::{mr_slot_counts, realized_slots, SlotRealization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SerVariant {
    Mr,
    Trg,
    Mtrg,
}

impl SerVariant {
    pub fn name(&self) -> &'static str {
        match self {
            SerVariant::Mr => "ser_mr",
            SerVariant::Trg => "ser_trg",
            SerVariant::Mtrg => "ser_mtrg",
        }
    }
}

/// Per-instance slot error counts. `score` is `(p+q)/n`, absent when n = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerInstance {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub score: Option<f64>,
}

impl SerInstance {
    fn new(p: usize, q: usize, n: usize) -> SerInstance {
        let score = (n > 0).then(|| (p + q) as f64 / n as f64);
        SerInstance { p, q, n, score }
    }
}

fn clipped_errors(expected: &SlotRealization, found: &SlotRealization) -> (usize, usize) {
    let mut p = 0;
    let mut q = 0;
    let keys: std::collections::BTreeSet<&str> =
        expected.keys().chain(found.keys()).collect();
    for key in keys {
        let e = expected.count(key);
        let f = found.count(key);
        p += e.saturating_sub(f);
        q += f.saturating_sub(e);
    }
    (p, q)
}

/// Slot error rate against the MR: every MR slot is expected exactly once;
/// the denominator is the MR slot count.
pub fn ser_mr(output: &str, mr: &MeaningRepresentation) -> SerInstance {
    let expected = mr_slot_counts(mr);
    let found = realized_slots(output, mr);
    let (p, q) = clipped_errors(&expected, &found);
    SerInstance::new(p, q, mr.slots.len())
}

/// Slot error rate against the main reference: expected slots are the ones
/// the reference actually realizes.
pub fn ser_trg(output: &str, main_reference: &str, mr: &MeaningRepresentation) -> SerInstance {
    let expected = realized_slots(main_reference, mr);
    let found = realized_slots(output, mr);
    let (p, q) = clipped_errors(&expected, &found);
    SerInstance::new(p, q, expected.total())
}

/// Multi-reference slot error rate: only redundancy counts. `p` is the number
/// of slot types the output realizes that no reference realizes; the
/// denominator is the size of the union of types realized across references.
pub fn ser_mtrg(output: &str, references: &[String], mr: &MeaningRepresentation) -> SerInstance {
    let mut union: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for reference in references {
        union.extend(realized_slots(reference, mr).keys().map(|k| k.to_string()));
    }
    let found = realized_slots(output, mr);
    let extra = found.keys().filter(|k| !union.contains(*k)).count();
    SerInstance::new(extra, 0, union.len())
}

/// Corpus aggregation of one SER variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerReport {
    pub variant: SerVariant,
    pub instances: Vec<SerInstance>,
    /// (Σp + Σq) / ΣN over defined instances; the headline number.
    pub micro: Option<f64>,
    /// Mean of the defined per-instance scores.
    pub macro_avg: Option<f64>,
    /// Instances with a zero denominator, excluded from both aggregates.
    pub skipped: usize,
}

pub fn aggregate_ser(variant: SerVariant, instances: Vec<SerInstance>) -> SerReport {
    let mut sum_p = 0usize;
    let mut sum_q = 0usize;
    let mut sum_n = 0usize;
    let mut scores: Vec<f64> = Vec::new();
    let mut skipped = 0usize;
    for inst in &instances {
        if inst.n == 0 {
            skipped += 1;
            continue;
        }
        sum_p += inst.p;
        sum_q += inst.q;
        sum_n += inst.n;
        scores.push(inst.score.unwrap());
    }
    let micro = (sum_n > 0).then(|| (sum_p + sum_q) as f64 / sum_n as f64);
    // Summing in sorted order makes the macro average exactly independent of
    // instance order.
    scores.sort_by(f64::total_cmp);
    let macro_avg = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    SerReport {
        variant,
        instances,
        micro,
        macro_avg,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nlgen_core::data::Slot;

    fn kentucky_mr() -> MeaningRepresentation {
        MeaningRepresentation {
            dialog_act: "inform".to_string(),
            slots: vec![
                Slot::new("timepoint", "1792"),
                Slot::new("objStr", "kentucky"),
                Slot::new("claStr", "state"),
                Slot::new("relStr", "founded"),
            ],
        }
    }

    // Delexicalized renderings of the running example's references.
    const REF_SHORT: &str = "TIMEPOINT_1";
    const REF_LONG: &str = "OBJSTR_1 formed in TIMEPOINT_1";

    #[test]
    fn ser_mr_counts_three_missing_slots_for_the_bare_answer() {
        let r = ser_mr(REF_SHORT, &kentucky_mr());
        assert_eq!((r.p, r.q, r.n), (3, 0, 4));
        assert_eq!(r.score, Some(0.75));
    }

    #[test]
    fn ser_mr_is_zero_on_exact_realization() {
        let r = ser_mr("TIMEPOINT_1 OBJSTR_1 CLASTR_1 founded", &kentucky_mr());
        assert_eq!((r.p, r.q), (0, 0));
        assert_eq!(r.score, Some(0.0));
    }

    #[test]
    fn ser_mr_counts_surplus_placeholders_as_redundant() {
        let r = ser_mr(
            "TIMEPOINT_1 TIMEPOINT_1 OBJSTR_1 CLASTR_1 founded",
            &kentucky_mr(),
        );
        assert_eq!((r.p, r.q), (0, 1));
        assert_eq!(r.score, Some(0.25));
    }

    #[test]
    fn ser_mr_with_empty_mr_is_skipped() {
        let mr = MeaningRepresentation {
            dialog_act: "inform".to_string(),
            slots: vec![],
        };
        let r = ser_mr("TIMEPOINT_1", &mr);
        assert_eq!(r.n, 0);
        assert_eq!(r.score, None);
        assert_eq!(r.q, 1);
    }

    #[test]
    fn ser_trg_of_the_reference_against_itself_is_zero() {
        let r = ser_trg(REF_SHORT, REF_SHORT, &kentucky_mr());
        assert_eq!((r.p, r.q, r.n), (0, 0, 1));
        assert_eq!(r.score, Some(0.0));
        let r = ser_trg(REF_LONG, REF_LONG, &kentucky_mr());
        assert_eq!(r.score, Some(0.0));
    }

    #[test]
    fn ser_trg_penalizes_slots_beyond_the_reference() {
        // The long answer realizes objStr on top of the reference's timepoint;
        // "formed" does not match the relation value "founded", so the only
        // redundant slot is objStr.
        let r = ser_trg(REF_LONG, REF_SHORT, &kentucky_mr());
        assert_eq!((r.p, r.q, r.n), (0, 1, 1));
        assert_eq!(r.score, Some(1.0));
    }

    #[test]
    fn ser_trg_ignores_word_order() {
        let r = ser_trg(
            "in TIMEPOINT_1 OBJSTR_1 formed",
            REF_LONG,
            &kentucky_mr(),
        );
        assert_eq!(r.score, Some(0.0));
    }

    #[test]
    fn ser_mtrg_accepts_any_slot_covered_by_some_reference() {
        let refs = vec![REF_SHORT.to_string(), REF_LONG.to_string()];
        let r = ser_mtrg(REF_LONG, &refs, &kentucky_mr());
        assert_eq!((r.p, r.n), (0, 2));
        assert_eq!(r.score, Some(0.0));
    }

    #[test]
    fn ser_mtrg_counts_types_outside_the_reference_union() {
        let refs = vec![REF_SHORT.to_string(), REF_LONG.to_string()];
        // The union covers timepoint and objStr; claStr is new.
        let r = ser_mtrg(
            "OBJSTR_1 CLASTR_1 formed in TIMEPOINT_1",
            &refs,
            &kentucky_mr(),
        );
        assert_eq!((r.p, r.n), (1, 2));
        assert_eq!(r.score, Some(0.5));
    }

    #[test]
    fn ser_mtrg_never_penalizes_missing_slots() {
        let refs = vec![REF_LONG.to_string()];
        let r = ser_mtrg("", &refs, &kentucky_mr());
        assert_eq!(r.p, 0);
        assert_eq!(r.score, Some(0.0));
    }

    #[test]
    fn aggregates_split_micro_macro_and_skipped() {
        let instances = vec![
            SerInstance::new(1, 0, 2), // 0.5
            SerInstance::new(0, 0, 2), // 0.0
            SerInstance::new(0, 3, 0), // skipped
        ];
        let report = aggregate_ser(SerVariant::Trg, instances);
        assert_eq!(report.micro, Some(0.25));
        assert_eq!(report.macro_avg, Some(0.25));
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn macro_average_is_order_independent() {
        let scores = vec![
            SerInstance::new(1, 0, 3),
            SerInstance::new(2, 1, 7),
            SerInstance::new(0, 1, 9),
            SerInstance::new(5, 0, 11),
        ];
        let forward = aggregate_ser(SerVariant::Mr, scores.clone());
        let mut reversed = scores;
        reversed.reverse();
        let backward = aggregate_ser(SerVariant::Mr, reversed);
        assert_eq!(forward.macro_avg, backward.macro_avg);
        assert_eq!(forward.micro, backward.micro);
    }
}
