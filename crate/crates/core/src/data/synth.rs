//! Synthetic QA corpus generator: a desk-scale stand-in for the kind of
//! grouped question/answer data the pipeline was designed around. Groups share
//! a question type (relation, entity types, class noun, phrasing family);
//! instances differ in their entity values. Entity values are composed from a
//! fixed syllable prefix code, which makes every value a globally unique
//! single token: alignment can never confuse two entities, and any value can
//! be delexicalized and restored exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Instance, MeaningRepresentation, Slot};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_groups: usize,
    pub instances_per_group: usize,
    /// Total slot-type inventory: class + relation + polarity + entity types.
    pub n_slot_types: usize,
    /// Attach the question as conversational context.
    pub with_context: bool,
    /// Probability that an instance's answer is damaged so that alignment
    /// filtering should reject it.
    pub noise_rate: f64,
}

// Prefix code for entity words: no syllable is a prefix of another, so
// concatenations decode uniquely and distinct counters give distinct words.
const SYLLABLES: [&str; 15] = [
    "ba", "re", "mo", "ta", "li", "sor", "ne", "ka", "vu", "del", "pi", "go", "zan", "fe", "lu",
];

/// Globally unique single-token entity word for a counter value.
fn entity_word(counter: usize) -> String {
    let mut c = counter + SYLLABLES.len(); // skip one-syllable words
    let mut word = String::new();
    while c > 0 {
        word.push_str(SYLLABLES[c % SYLLABLES.len()]);
        c /= SYLLABLES.len();
    }
    word
}

const NAMED_ENTITY_TYPES: [&str; 12] = [
    "timepoint",
    "objStr",
    "humanBeing",
    "location",
    "organization",
    "artifact",
    "event",
    "language",
    "substance",
    "quantity",
    "vehicle",
    "material",
];

fn entity_type_pool(n: usize) -> Vec<String> {
    (0..n)
        .map(|k| {
            NAMED_ENTITY_TYPES
                .get(k)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("kind{:03}", k - NAMED_ENTITY_TYPES.len()))
        })
        .collect()
}

const CLASS_POOL: [&str; 12] = [
    "state", "city", "company", "festival", "museum", "bridge", "harbor", "castle", "garden",
    "theater", "library", "market",
];

const RELATION_POOL: [&str; 12] = [
    "founded",
    "formed",
    "started",
    "opened",
    "launched",
    "built",
    "created",
    "established",
    "renovated",
    "chartered",
    "commissioned",
    "inaugurated",
];

// Question phrasings. The wording encodes the expected answer shape (a bare
// entity vs a full sentence), which is what makes the corpus learnable from
// context: {s} subject, {r} relation, {c} class, {a} answer entity.
const ENTITY_FORMS: [&str; 3] = [
    "what year was {s} {r}",
    "give the year {s} was {r}",
    "which year was the {c} {s} {r}",
];
const SENTENTIAL_FORMS: [&str; 3] = [
    "when was {s} {r}",
    "do you know when {s} was {r}",
    "when was the {c} {s} {r}",
];
const CONFIRM_FORMS: [&str; 3] = [
    "was {s} {r} in {a}",
    "is it true that {s} was {r} in {a}",
    "confirm that the {c} {s} was {r} in {a}",
];

#[derive(Clone, Copy, PartialEq)]
enum Style {
    EntityOnly,
    Sentential,
    Confirmation,
}

struct InstancePlan {
    group: usize,
    index: usize,
    subject: String,
    answer: String,
    style: Style,
    polarity: bool,
    phrasing: usize,
    noise: Option<NoiseKind>,
}

#[derive(Clone, Copy)]
enum NoiseKind {
    ForeignEntity,
    NothingRealized,
}

struct GroupPlan {
    subject_type: String,
    answer_type: String,
    class_value: &'static str,
    relation: &'static str,
}

fn fill(template: &str, plan: &InstancePlan, group: &GroupPlan) -> String {
    template
        .replace("{s}", &plan.subject)
        .replace("{r}", group.relation)
        .replace("{c}", group.class_value)
        .replace("{a}", &plan.answer)
}

/// Generate a deterministic synthetic corpus.
pub fn synth_corpus(config: &SynthConfig, seed: u64) -> Result<Corpus> {
    if config.n_groups == 0 || config.instances_per_group == 0 {
        return Err(Error::contract("group and instance counts must be positive"));
    }
    if config.n_slot_types < 4 {
        return Err(Error::contract(format!(
            "need at least 4 slot types (entity, class, relation, polarity), got {}",
            config.n_slot_types
        )));
    }
    if !(0.0..=1.0).contains(&config.noise_rate) {
        return Err(Error::contract(format!(
            "noise rate must lie in [0, 1], got {}",
            config.noise_rate
        )));
    }

    let entity_types = entity_type_pool(config.n_slot_types - 3);
    let mut rng = rng::seeded(seed);

    // Plan all groups and instances first so that noise injection can borrow a
    // value that genuinely belongs to some other instance's MR.
    let mut groups = Vec::with_capacity(config.n_groups);
    let mut plans: Vec<InstancePlan> = Vec::new();
    let mut counter = 0usize;
    for g in 0..config.n_groups {
        let subject_type = entity_types[(2 * g) % entity_types.len()].clone();
        let answer_type = entity_types[(2 * g + 1) % entity_types.len()].clone();
        let confirmation = g % 3 == 2;
        let group = GroupPlan {
            subject_type,
            answer_type,
            class_value: CLASS_POOL[g % CLASS_POOL.len()],
            relation: RELATION_POOL[rng.random_range(0..RELATION_POOL.len())],
        };
        for i in 0..config.instances_per_group {
            let subject = entity_word(counter);
            let answer = entity_word(counter + 1);
            counter += 2;
            let style = if confirmation {
                Style::Confirmation
            } else if rng.random_range(0..2u32) == 0 {
                Style::EntityOnly
            } else {
                Style::Sentential
            };
            let polarity = rng.random_range(0..2u32) == 0;
            let phrasing = rng.random_range(0..3usize);
            let noise = if rng.random::<f64>() < config.noise_rate {
                if rng.random::<f64>() < 0.7 {
                    Some(NoiseKind::ForeignEntity)
                } else {
                    Some(NoiseKind::NothingRealized)
                }
            } else {
                None
            };
            plans.push(InstancePlan {
                group: g,
                index: i,
                subject,
                answer,
                style,
                polarity,
                phrasing,
                noise,
            });
        }
        groups.push(group);
    }

    let total = plans.len();
    let mut instances = Vec::with_capacity(total);
    for (i, plan) in plans.iter().enumerate() {
        let group = &groups[plan.group];

        let dialog_act = if plan.style == Style::Confirmation { "confirm" } else { "inform" };

        let mut slots = Vec::new();
        if plan.style == Style::Confirmation {
            slots.push(Slot::new("polarity", if plan.polarity { "yes" } else { "no" }));
        }
        slots.push(Slot::new(group.answer_type.clone(), plan.answer.clone()));
        slots.push(Slot::new(group.subject_type.clone(), plan.subject.clone()));
        slots.push(Slot::new("claStr", group.class_value));
        slots.push(Slot::new("relStr", group.relation));

        let question_form = match plan.style {
            Style::EntityOnly => ENTITY_FORMS[plan.phrasing],
            Style::Sentential => SENTENTIAL_FORMS[plan.phrasing],
            Style::Confirmation => CONFIRM_FORMS[plan.phrasing],
        };
        let context = config.with_context.then(|| fill(question_form, plan, group));

        let mut answer_text = match plan.style {
            Style::EntityOnly => plan.answer.clone(),
            Style::Sentential => fill("{s} {r} in {a}", plan, group),
            Style::Confirmation => {
                if plan.polarity {
                    fill("yes , {s} was {r} in {a}", plan, group)
                } else {
                    fill("no , {s} was not {r} in {a}", plan, group)
                }
            }
        };
        match plan.noise {
            Some(NoiseKind::ForeignEntity) => {
                let foreign = &plans[(i + 1) % total].subject;
                answer_text = format!("{answer_text} near {foreign}");
            }
            Some(NoiseKind::NothingRealized) => {
                answer_text = "that is not something i can say".to_string();
            }
            None => {}
        }

        instances.push(Instance {
            id: format!("g{:03}_i{:02}", plan.group, plan.index),
            group_id: format!("g{:03}", plan.group),
            context,
            mr: MeaningRepresentation {
                dialog_act: dialog_act.to_string(),
                slots,
            },
            references: vec![answer_text],
            delex_main_reference: None,
            delex_context: None,
            alignment: None,
        });
    }

    let corpus = Corpus::new("synth", instances);
    corpus.validate()?;
    Ok(corpus)
}
