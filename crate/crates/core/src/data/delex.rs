//! Delexicalization: replacing noun-phrase slot values in a text with typed
//! placeholder tokens, and the inverse substitution.
//!
//! Placeholders are `TYPE_k` where TYPE is the slot type uppercased with
//! non-alphanumerics removed and k is the 1-based position of the slot among
//! same-type slots in MR order ("objStr" -> `OBJSTR_1`). Source texts are
//! lowercase, so placeholders can never collide with corpus tokens.

use crate::data::{AlignStatus, Alignment, AlignmentEntry, MeaningRepresentation, Slot};
use crate::error::{Error, Result};

// ── Text normalization ──────────────────────────────────────────────────────

/// Lowercase, split punctuation into standalone tokens, and split on
/// whitespace. Apostrophes, hyphens, and underscores stay inside words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.to_lowercase().chars() {
        let separate = c.is_ascii_punctuation() && !matches!(c, '\'' | '-' | '_');
        if separate {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

/// Canonical form of a lexical text: tokenized and joined by single spaces.
/// Idempotent, so stored texts can be normalized at load without drift.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Whitespace split for texts that are already normalized (including
/// delexicalized texts, whose placeholders must keep their case).
pub fn split_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

// ── Slot classification ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotClass {
    /// Entity-like value; delexicalized into a placeholder.
    NounPhrase,
    /// Verb-phrase relation; left lexical in text.
    Relation,
    /// Yes/no-like value; left lexical in text.
    Binary,
}

/// Sanitized type key: lowercase alphanumerics only. "objStr" -> "objstr",
/// "human being" -> "humanbeing". Placeholder parsing reverses through this
/// key, so all slot-type comparisons use it.
pub fn slot_key(slot_type: &str) -> String {
    slot_type
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_lowercase()
}

/// Classify a slot from its type and value. Relation types are recognized by
/// the "rel" prefix (or a bare "r"); binary slots by yes/no-like values or
/// polarity phrasing. Everything else is a noun phrase.
pub fn classify_slot(slot: &Slot) -> SlotClass {
    let key = slot_key(&slot.slot_type);
    if key.starts_with("rel") || key == "r" {
        return SlotClass::Relation;
    }
    let value = normalize(&slot.value);
    if matches!(value.as_str(), "yes" | "no")
        || value.ends_with("polarity")
        || matches!(key.as_str(), "true" | "false" | "polarity")
    {
        return SlotClass::Binary;
    }
    SlotClass::NounPhrase
}

/// Placeholder token for the k-th (1-based) slot of a type.
pub fn placeholder_token(slot_type: &str, k: usize) -> String {
    format!("{}_{}", slot_key(slot_type).to_uppercase(), k)
}

/// Parse `TYPE_k` back into `(type key, k)`. Returns None for ordinary tokens.
pub fn parse_placeholder(token: &str) -> Option<(String, usize)> {
    let (head, tail) = token.rsplit_once('_')?;
    if head.is_empty()
        || !head.chars().next().unwrap().is_ascii_uppercase()
        || !head.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
    {
        return None;
    }
    if tail.is_empty() || !tail.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some((head.to_lowercase(), tail.parse().ok()?))
}

// ── Delexicalization ────────────────────────────────────────────────────────

/// 1-based index of each slot among same-type slots, in MR order.
fn type_indices(mr: &MeaningRepresentation) -> Vec<usize> {
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    mr.slots
        .iter()
        .map(|s| {
            let count = seen.entry(slot_key(&s.slot_type)).or_insert(0);
            *count += 1;
            *count
        })
        .collect()
}

/// Find the next non-overlapping occurrence of `needle` in `tokens` starting
/// at `from`, skipping positions already consumed.
fn find_match(tokens: &[Option<String>], needle: &[String], from: usize) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let n = tokens.len();
    let m = needle.len();
    let mut pos = from;
    while pos + m <= n {
        let hit = (0..m).all(|j| tokens[pos + j].as_deref() == Some(needle[j].as_str()));
        if hit {
            return Some(pos);
        }
        pos += 1;
    }
    None
}

/// Replace every occurrence of the MR's noun-phrase slot values in `text`
/// with placeholder tokens and record how each slot aligned.
///
/// Matching is case-insensitive, respects token boundaries, and proceeds
/// longest-value-first so a value that contains another slot's value is
/// consumed before the shorter one can match inside it. Relation and binary
/// slots are never replaced; they are looked up verbatim in the final token
/// stream and recorded as lexical match or miss.
pub fn delexicalize(text: &str, mr: &MeaningRepresentation) -> (String, Alignment) {
    let mut tokens: Vec<Option<String>> = tokenize(text).into_iter().map(Some).collect();
    let indices = type_indices(mr);
    let classes: Vec<SlotClass> = mr.slots.iter().map(classify_slot).collect();

    // longest value first; ties keep MR order
    let mut order: Vec<usize> = (0..mr.slots.len())
        .filter(|&i| classes[i] == SlotClass::NounPhrase)
        .collect();
    order.sort_by_key(|&i| std::cmp::Reverse(tokenize(&mr.slots[i].value).len()));

    let mut entries: Vec<Option<AlignmentEntry>> = vec![None; mr.slots.len()];
    for &i in &order {
        let slot = &mr.slots[i];
        let needle = tokenize(&slot.value);
        let ph = placeholder_token(&slot.slot_type, indices[i]);
        let mut occurrences = 0;
        let mut from = 0;
        while let Some(pos) = find_match(&tokens, &needle, from) {
            tokens[pos] = Some(ph.clone());
            for t in tokens.iter_mut().take(pos + needle.len()).skip(pos + 1) {
                *t = None;
            }
            occurrences += 1;
            from = pos + needle.len();
        }
        entries[i] = Some(AlignmentEntry {
            slot_index: i,
            slot_type: slot.slot_type.clone(),
            placeholder: (occurrences > 0).then(|| ph.clone()),
            status: if occurrences > 0 {
                AlignStatus::Delexicalized
            } else {
                AlignStatus::Missing
            },
            occurrences,
        });
    }

    // lexical slots are matched against the final token stream
    let final_tokens: Vec<String> = tokens.iter().flatten().cloned().collect();
    for i in 0..mr.slots.len() {
        if classes[i] == SlotClass::NounPhrase {
            continue;
        }
        let slot = &mr.slots[i];
        let needle = tokenize(&slot.value);
        let occurrences = count_subsequence(&final_tokens, &needle);
        entries[i] = Some(AlignmentEntry {
            slot_index: i,
            slot_type: slot.slot_type.clone(),
            placeholder: None,
            status: if occurrences > 0 {
                AlignStatus::LexicalMatch
            } else {
                AlignStatus::LexicalMiss
            },
            occurrences,
        });
    }

    let alignment = Alignment {
        entries: entries.into_iter().map(Option::unwrap).collect(),
    };
    (final_tokens.join(" "), alignment)
}

/// Non-overlapping occurrences of a token sequence in a token stream.
pub(crate) fn count_subsequence(tokens: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || needle.len() > tokens.len() {
        return 0;
    }
    let mut count = 0;
    let mut pos = 0;
    while pos + needle.len() <= tokens.len() {
        if tokens[pos..pos + needle.len()] == *needle {
            count += 1;
            pos += needle.len();
        } else {
            pos += 1;
        }
    }
    count
}

/// Substitute every placeholder in a delexicalized text with the value of the
/// matching MR slot. A placeholder with no matching slot (unknown type, or an
/// index past the count of same-type slots) is an error naming the token.
pub fn relexicalize(delex_text: &str, mr: &MeaningRepresentation) -> Result<String> {
    let indices = type_indices(mr);
    let mut out: Vec<String> = Vec::new();
    for token in delex_text.split_whitespace() {
        match parse_placeholder(token) {
            Some((key, k)) => {
                let slot = mr
                    .slots
                    .iter()
                    .enumerate()
                    .find(|(i, s)| slot_key(&s.slot_type) == key && indices[*i] == k)
                    .map(|(_, s)| s);
                match slot {
                    Some(s) => out.push(normalize(&s.value)),
                    None => {
                        return Err(Error::UnresolvedPlaceholder {
                            token: token.to_string(),
                        })
                    }
                }
            }
            None => out.push(token.to_string()),
        }
    }
    Ok(out.join(" "))
}
