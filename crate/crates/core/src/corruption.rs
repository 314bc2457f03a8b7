//! Clean/corrupted prompt pairs for patching experiments.
//!
//! A pair shares everything except one span: a table or field name in the
//! instruction or in the context, an ordering direction, or an aggregate
//! phrase. Both prompts are cut right before the response token the
//! feature decides, and that token is recorded for each side.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{frame_prompt, Example};
use crate::instruction::{EntityKind, MentionRole};
use crate::level::Level;
use crate::schema::SchemaContext;
use crate::seed::{domain, stream, sub_seed, Stream};
use crate::sql::{render_create_table_spans, render_sql_spans, Aggregate, DdlPart, Direction, SqlPart, SqlQuery};
use crate::vocab::VocabPool;

pub const DEFAULT_BATCHES: usize = 15;
pub const DEFAULT_BATCH_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorruptionFeature {
    EngTableName,
    EngFieldName,
    DefTableName,
    DefFieldName,
    OrderByField,
    OrderByDirection,
    AggregateField,
    AggregateFunction,
}

impl CorruptionFeature {
    pub const ALL: [CorruptionFeature; 8] = [
        CorruptionFeature::EngTableName,
        CorruptionFeature::EngFieldName,
        CorruptionFeature::DefTableName,
        CorruptionFeature::DefFieldName,
        CorruptionFeature::OrderByField,
        CorruptionFeature::OrderByDirection,
        CorruptionFeature::AggregateField,
        CorruptionFeature::AggregateFunction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionFeature::EngTableName => "EngTableName",
            CorruptionFeature::EngFieldName => "EngFieldName",
            CorruptionFeature::DefTableName => "DefTableName",
            CorruptionFeature::DefFieldName => "DefFieldName",
            CorruptionFeature::OrderByField => "OrderByField",
            CorruptionFeature::OrderByDirection => "OrderByDirection",
            CorruptionFeature::AggregateField => "AggregateField",
            CorruptionFeature::AggregateFunction => "AggregateFunction",
        }
    }

    /// Lowest level whose queries contain the feature.
    pub fn min_level(self) -> Level {
        match self {
            CorruptionFeature::OrderByField | CorruptionFeature::OrderByDirection => Level::Cs2,
            CorruptionFeature::AggregateField | CorruptionFeature::AggregateFunction => Level::Cs3,
            _ => Level::Cs1,
        }
    }

    pub fn supported_at(self, level: Level) -> bool {
        level >= self.min_level()
    }
}

impl fmt::Display for CorruptionFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionFeature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = |x: &str| x.replace(['_', '-'], "").to_ascii_lowercase();
        CorruptionFeature::ALL
            .into_iter()
            .find(|f| norm(f.name()) == norm(s))
            .ok_or_else(|| format!("unknown corruption feature {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorruptionError {
    #[error("{feature} needs level {} or above, dataset is {level}", .feature.min_level())]
    UnsupportedFeature { feature: CorruptionFeature, level: Level },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no example in the dataset contains a {0} instance")]
    NoEligibleExamples(CorruptionFeature),
    #[error("vocabulary has no replacement left for {0}")]
    PoolExhausted(CorruptionFeature),
    #[error("example {id}: {message}")]
    BadExample { id: u64, message: String },
}

/// Char range `[start, end)`.
pub type Span = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionPair {
    pub batch: usize,
    pub feature: CorruptionFeature,
    pub example_id: u64,
    pub clean_prompt: String,
    pub corrupted_prompt: String,
    pub clean_span: Span,
    pub corrupted_span: Span,
    pub clean_text: String,
    pub corrupted_text: String,
    pub gold_clean: String,
    pub gold_corrupted: String,
}

fn char_slice(chars: &[char], (a, b): Span) -> Option<String> {
    (a <= b && b <= chars.len()).then(|| chars[a..b].iter().collect())
}

/// True iff the prompts differ only inside the recorded spans, the spans
/// read back as the recorded texts, and the texts differ.
pub fn verify_pair(pair: &CorruptionPair) -> bool {
    let clean: Vec<char> = pair.clean_prompt.chars().collect();
    let corrupt: Vec<char> = pair.corrupted_prompt.chars().collect();
    let (cs, ce) = pair.clean_span;
    let (ks, ke) = pair.corrupted_span;
    let (Some(clean_text), Some(corrupt_text)) = (char_slice(&clean, pair.clean_span), char_slice(&corrupt, pair.corrupted_span))
    else {
        return false;
    };
    cs == ks
        && clean_text == pair.clean_text
        && corrupt_text == pair.corrupted_text
        && pair.clean_text != pair.corrupted_text
        && clean[..cs] == corrupt[..ks]
        && clean[ce..] == corrupt[ke..]
}

/// Parsed view of one example.
struct Source<'a> {
    example: &'a Example,
    query: SqlQuery,
    schema: SchemaContext,
    /// Candidate instance slots for the feature.
    slots: Vec<usize>,
}

fn instance_slots(feature: CorruptionFeature, query: &SqlQuery, schema: &SchemaContext) -> Vec<usize> {
    use CorruptionFeature::*;
    match feature {
        EngTableName | DefTableName => vec![0],
        EngFieldName | DefFieldName => (0..query.select.len()).collect(),
        OrderByField | OrderByDirection => (0..query.order_by.len()).collect(),
        AggregateField => (0..query.select.len())
            .filter(|&i| query.select[i].aggregate.is_some())
            .collect(),
        AggregateFunction => (0..query.select.len())
            .filter(|&i| {
                let item = &query.select[i];
                let kind = schema.main.column_type(&item.field).map(|t| t.base_kind());
                item.aggregate.is_some() && kind.is_some_and(|k| Aggregate::legal_for(k).len() > 1)
            })
            .collect(),
    }
}

fn random_table(pool: &VocabPool, schema: &SchemaContext, rng: &mut Stream) -> Option<String> {
    let options: Vec<&str> = pool
        .tables()
        .iter()
        .map(|t| t.name.as_str())
        .filter(|n| schema.tables().all(|t| t.name != *n))
        .collect();
    options.choose(rng).map(|s| s.to_string())
}

fn random_field(pool: &VocabPool, schema: &SchemaContext, rng: &mut Stream) -> Option<String> {
    // Rejection sampling: schemas hold at most 24 of the pool's fields.
    for _ in 0..64 {
        let f = &pool.fields()[rng.gen_range(0..pool.fields().len())].name;
        if schema.tables().all(|t| t.column(f).is_none()) {
            return Some(f.clone());
        }
    }
    let options: Vec<&String> = pool
        .fields()
        .iter()
        .map(|f| &f.name)
        .filter(|f| schema.tables().all(|t| t.column(f).is_none()))
        .collect();
    options.choose(rng).map(|s| s.to_string())
}

fn build_pair(
    src: &Source,
    feature: CorruptionFeature,
    slot: usize,
    pool: &VocabPool,
    batch: usize,
    rng: &mut Stream,
) -> Result<CorruptionPair, CorruptionError> {
    use CorruptionFeature::*;
    let ex = src.example;
    let bad = |message: String| CorruptionError::BadExample { id: ex.id, message };
    let exhausted = || CorruptionError::PoolExhausted(feature);
    let instruction_offset = "### Instruction: ".chars().count();
    let context_offset = instruction_offset + ex.instruction.chars().count() + " ### Context: ".chars().count();
    let rec = &ex.substitutions;
    let mention = |role: MentionRole| {
        rec.mention(role, slot)
            .map(|m| (m.start, m.end))
            .ok_or_else(|| bad(format!("missing {role:?} mention")))
    };
    let (ddl_text, ddl_spans) = render_create_table_spans(&src.schema);
    if ddl_text != ex.context {
        return Err(bad("context is not canonical".into()));
    }
    let ddl = |part: DdlPart| {
        ddl_spans
            .iter()
            .find(|(p, _, _)| *p == part)
            .map(|&(_, a, b)| (a, b))
            .ok_or_else(|| bad(format!("missing {part:?} in context")))
    };
    let q = &src.query;

    // (span in the instruction or context, already offset into the prompt;
    //  replacement text; SQL part measured; answers)
    let (span, replacement, part, gold_clean, gold_corrupted): (Span, String, SqlPart, String, String) = match feature {
        EngTableName => {
            let (a, b) = mention(MentionRole::Table)?;
            let t = random_table(pool, &src.schema, rng).ok_or_else(exhausted)?;
            ((instruction_offset + a, instruction_offset + b), t.clone(), SqlPart::Table, q.table.clone(), t)
        }
        DefTableName => {
            let (a, b) = ddl(DdlPart::TableName(0))?;
            let t = random_table(pool, &src.schema, rng).ok_or_else(exhausted)?;
            ((context_offset + a, context_offset + b), t.clone(), SqlPart::Table, q.table.clone(), t)
        }
        EngFieldName | AggregateField => {
            let (a, b) = mention(MentionRole::SelectField)?;
            let f = random_field(pool, &src.schema, rng).ok_or_else(exhausted)?;
            let field = q.select[slot].field.clone();
            ((instruction_offset + a, instruction_offset + b), f.clone(), SqlPart::SelectField(slot), field, f)
        }
        DefFieldName => {
            let field = &q.select[slot].field;
            let col = src
                .schema
                .main
                .columns
                .iter()
                .position(|c| &c.name == field)
                .ok_or_else(|| bad(format!("{field} not in context")))?;
            let (a, b) = ddl(DdlPart::ColumnName(0, col))?;
            let f = random_field(pool, &src.schema, rng).ok_or_else(exhausted)?;
            ((context_offset + a, context_offset + b), f.clone(), SqlPart::SelectField(slot), field.clone(), f)
        }
        OrderByField => {
            let (a, b) = mention(MentionRole::OrderField)?;
            let f = random_field(pool, &src.schema, rng).ok_or_else(exhausted)?;
            let field = q.order_by[slot].field.clone();
            ((instruction_offset + a, instruction_offset + b), f.clone(), SqlPart::OrderField(slot), field, f)
        }
        OrderByDirection => {
            let key = &q.order_by[slot];
            let (a, b) = mention(MentionRole::OrderDirection)?;
            let (fa, fb) = mention(MentionRole::OrderField)?;
            let chars: Vec<char> = ex.instruction.chars().collect();
            let surface: String = chars[fa..fb].iter().collect();
            let clean_words: String = chars[a..b].iter().collect();
            // Find the phrase pair that produced this text and take the
            // opposite side's direction words.
            let flipped = pool
                .lexicon()
                .order_phrases()
                .iter()
                .find_map(|p| {
                    let (this, other) = match key.direction {
                        Direction::Asc => (&p.asc, &p.desc),
                        Direction::Desc => (&p.desc, &p.asc),
                    };
                    let (ra, _) = this.direction_range(&surface);
                    let rendered = this.render(&surface);
                    let start = a.checked_sub(ra)?;
                    let len = rendered.chars().count();
                    let here: String = chars.get(start..start + len)?.iter().collect();
                    (this.direction_words == clean_words && here == rendered).then(|| other.direction_words.clone())
                })
                .ok_or_else(|| bad("ordering phrase not found in lexicon".into()))?;
            (
                (instruction_offset + a, instruction_offset + b),
                flipped,
                SqlPart::OrderDirection(slot),
                key.direction.as_str().to_string(),
                key.direction.flipped().as_str().to_string(),
            )
        }
        AggregateFunction => {
            let item = &q.select[slot];
            let current = item.aggregate.ok_or_else(|| bad("item is not aggregated".into()))?;
            let kind = src
                .schema
                .main
                .column_type(&item.field)
                .ok_or_else(|| bad(format!("{} not in context", item.field)))?
                .base_kind();
            let (a, b) = mention(MentionRole::AggregateFn)?;
            let others: Vec<Aggregate> = Aggregate::legal_for(kind).iter().copied().filter(|k| *k != current).collect();
            let new_kind = *others.choose(rng).ok_or_else(exhausted)?;
            let phrases: Vec<_> = pool.lexicon().aggregate_phrases().for_kind(new_kind).collect();
            let phrase = phrases.choose(rng).ok_or_else(exhausted)?;
            (
                (instruction_offset + a, instruction_offset + b),
                phrase.function_text().to_string(),
                SqlPart::SelectAggregate(slot),
                current.as_str().to_string(),
                new_kind.as_str().to_string(),
            )
        }
    };

    let (sql, sql_spans) = render_sql_spans(q);
    let (cut, _) = sql_spans.get(part).ok_or_else(|| bad(format!("missing {part:?} in response")))?;
    let sql_prefix: String = sql.chars().take(cut).collect();
    let clean_prompt = format!("{} {}", frame_prompt(ex, false), sql_prefix);
    let chars: Vec<char> = clean_prompt.chars().collect();
    let clean_text: String = chars[span.0..span.1].iter().collect();
    let mut corrupted: String = chars[..span.0].iter().collect();
    corrupted.push_str(&replacement);
    corrupted.extend(&chars[span.1..]);
    let corrupted_span = (span.0, span.0 + replacement.chars().count());
    Ok(CorruptionPair {
        batch,
        feature,
        example_id: ex.id,
        clean_prompt,
        corrupted_prompt: corrupted,
        clean_span: span,
        corrupted_span,
        clean_text,
        corrupted_text: replacement,
        gold_clean,
        gold_corrupted,
    })
}

/// Builds `n_batches` batches of `batch_size` pairs for one feature.
///
/// Batch `b` draws from its own stream seeded by `(seed, b)`: an example
/// uniformly among those containing the feature, an instance within it,
/// then a replacement.
pub fn gen_pairs(
    examples: &[Example],
    pool: &VocabPool,
    feature: CorruptionFeature,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<Vec<Vec<CorruptionPair>>, CorruptionError> {
    if examples.is_empty() {
        return Err(CorruptionError::EmptyDataset);
    }
    if let Some(low) = examples.iter().map(|e| e.level).min().filter(|l| !feature.supported_at(*l)) {
        return Err(CorruptionError::UnsupportedFeature { feature, level: low });
    }
    let sources: Vec<Source> = examples
        .iter()
        .map(|e| {
            let bad = |message: String| CorruptionError::BadExample { id: e.id, message };
            let query = e.query().map_err(bad)?;
            let schema = e.schema().map_err(bad)?;
            let slots = instance_slots(feature, &query, &schema);
            Ok(Source {
                example: e,
                query,
                schema,
                slots,
            })
        })
        .collect::<Result<Vec<_>, CorruptionError>>()?
        .into_iter()
        .filter(|s| !s.slots.is_empty())
        .collect();
    if sources.is_empty() {
        return Err(CorruptionError::NoEligibleExamples(feature));
    }
    // Surface lookups must hit a recorded entity for name features.
    debug_assert!(sources
        .iter()
        .all(|s| s.example.substitutions.surface(EntityKind::Table, &s.query.table).is_some()
            || s.example.substitutions.entities.is_empty()));
    (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(sub_seed(seed, domain::CORRUPTION, b as u64));
            (0..batch_size)
                .map(|_| {
                    let src = sources.choose(&mut rng).unwrap();
                    let slot = *src.slots.choose(&mut rng).unwrap();
                    build_pair(src, feature, slot, pool, b, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect()
}
