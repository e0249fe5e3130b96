//! Evaluation metrics for generated utterances.
//!
//! Two families live here:
//!
//! * **Slot error rate (SER)** in three flavors: against the meaning
//!   representation itself (`ser_mr`), against what the main reference
//!   actually realizes (`ser_trg`), and against the union of all references
//!   (`ser_mtrg`, additions only). Slots are counted as multisets per type
//!   with clipping, and all comparisons happen in delexicalized space.
//! * **Corpus BLEU-4** with the standard brevity penalty and closest-length
//!   reference selection, no smoothing.
//!
//! [`evaluate_corpus`] ties both together over an aligned (output, instance)
//! list and renders a report that is JSONL for machines and a `# `-commented
//! table for humans.

mod bleu;
mod realize;
mod report;
mod ser;

pub use bleu::{bleu, BleuReport};
pub use realize::{mr_slot_counts, realized_slots, SlotRealization};
pub use report::{evaluate_corpus, EvalReport, InstanceRow, Metric};
pub use ser::{aggregate_ser, ser_mr, ser_mtrg, ser_trg, SerInstance, SerReport, SerVariant};
