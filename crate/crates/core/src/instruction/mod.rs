//! Natural-language instructions for gold queries.
//!
//! An instruction is a template filled with surface forms of the query's
//! tables and fields. In the synonym variant each table is replaced by a
//! dictionary synonym with probability 0.8 and each field with probability
//! 0.5, one coin per entity per example, so an entity mentioned twice keeps
//! the same surface. Every mention's char span is recorded, which is what
//! corruption relies on to edit exactly one feature.

pub mod lexicon;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::level::Variant;
use crate::query_gen::EmptyDataset;
use crate::schema::SchemaContext;
use crate::sql::{Operator, SqlQuery};
use crate::vocab::{BaseKind, Named, VocabPool};
use lexicon::{Piece, Slot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Table,
    Field,
}

/// How one schema entity is named in the instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub kind: EntityKind,
    pub name: String,
    pub surface: String,
    /// Whether the entity had synonyms available, i.e. could have been
    /// substituted at all.
    pub eligible: bool,
}

impl Substitution {
    pub fn substituted(&self) -> bool {
        self.surface != self.name
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionRole {
    Table,
    JoinTable,
    SelectField,
    AggregateFn,
    JoinLeftKey,
    JoinRightKey,
    FilterField,
    OrderField,
    OrderDirection,
}

/// A located mention; `start..end` is a char range of the instruction and
/// `slot` indexes the select item, filter or order key it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub role: MentionRole,
    pub slot: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRecord {
    /// One entry per entity, in order of first appearance in the query.
    pub entities: Vec<Substitution>,
    pub mentions: Vec<Mention>,
}

impl SubstitutionRecord {
    pub fn mention(&self, role: MentionRole, slot: usize) -> Option<&Mention> {
        self.mentions.iter().find(|m| m.role == role && m.slot == slot)
    }

    pub fn surface(&self, kind: EntityKind, name: &str) -> Option<&str> {
        self.entities
            .iter()
            .find(|e| e.kind == kind && e.name == name)
            .map(|e| e.surface.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub text: String,
    pub record: SubstitutionRecord,
}

/// Phrase used for a comparison in WHERE suffixes.
pub fn operator_phrase(op: Operator, kind: BaseKind) -> &'static str {
    match (op, kind) {
        (Operator::Lt, BaseKind::Temporal) => "is earlier than",
        (Operator::Gt, BaseKind::Temporal) => "is later than",
        (Operator::Eq, _) => "equals",
        (Operator::Lt, _) => "is less than",
        (Operator::Gt, _) => "is greater than",
        (Operator::Le, _) => "is less than or equal to",
        (Operator::Ge, _) => "is greater than or equal to",
        (Operator::Like, _) => "is containing",
    }
}

struct Writer {
    text: String,
    chars: usize,
    mentions: Vec<Mention>,
}

impl Writer {
    fn push(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn mention(&mut self, role: MentionRole, slot: usize, s: &str) {
        let start = self.chars;
        self.push(s);
        self.mentions.push(Mention {
            role,
            slot,
            start,
            end: self.chars,
        });
    }
}

/// Picks the surface of every entity the query mentions.
fn choose_surfaces<R: Rng + ?Sized>(
    query: &SqlQuery,
    schema: &SchemaContext,
    variant: Variant,
    pool: &VocabPool,
    rng: &mut R,
) -> Vec<Substitution> {
    let mut order: Vec<(EntityKind, &str)> = vec![(EntityKind::Table, &query.table)];
    if let Some(j) = &query.join {
        order.push((EntityKind::Table, &j.right_table));
    }
    let fields = query
        .select
        .iter()
        .map(|s| s.field.as_str())
        .chain(query.join.iter().flat_map(|j| [j.left_key.as_str(), j.right_key.as_str()]))
        .chain(query.filters.iter().map(|f| f.field.as_str()))
        .chain(query.order_by.iter().map(|o| o.field.as_str()));
    for f in fields {
        if !order.contains(&(EntityKind::Field, f)) {
            order.push((EntityKind::Field, f));
        }
    }

    let canonical: HashSet<&str> = schema
        .tables()
        .flat_map(|t| std::iter::once(t.name.as_str()).chain(t.columns.iter().map(|c| c.name.as_str())))
        .collect();
    let mut used: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(order.len());
    for (kind, name) in order {
        let synonyms: &[String] = match kind {
            EntityKind::Table => pool.table(name).map(|t| t.synonyms()).unwrap_or_default(),
            EntityKind::Field => pool.field(name).map(|f| f.synonyms()).unwrap_or_default(),
        };
        let eligible: Vec<&String> = synonyms
            .iter()
            .filter(|s| !canonical.contains(s.as_str()) && !used.contains(s.as_str()))
            .collect();
        let p = match kind {
            EntityKind::Table => variant.p_table_synonym(),
            EntityKind::Field => variant.p_field_synonym(),
        };
        let surface = if !eligible.is_empty() && p > 0.0 && rng.gen_bool(p) {
            eligible.choose(rng).unwrap().to_string()
        } else {
            name.to_string()
        };
        used.insert(surface.clone());
        out.push(Substitution {
            kind,
            name: name.to_string(),
            surface,
            eligible: !eligible.is_empty(),
        });
    }
    out
}

/// Writes the instruction for `query`.
pub fn gen_instruction<R: Rng + ?Sized>(
    query: &SqlQuery,
    schema: &SchemaContext,
    variant: Variant,
    pool: &VocabPool,
    rng: &mut R,
) -> Instruction {
    let lex = pool.lexicon();
    let template = lex.templates().choose(rng).expect("lexicon has templates");
    let entities = choose_surfaces(query, schema, variant, pool, rng);
    let surface = |kind: EntityKind, name: &str| -> String {
        entities
            .iter()
            .find(|e| e.kind == kind && e.name == name)
            .map(|e| e.surface.clone())
            .unwrap_or_else(|| name.to_string())
    };
    let kind_of = |field: &str| {
        schema
            .main
            .column_type(field)
            .map(|t| t.base_kind())
            .unwrap_or(BaseKind::Text)
    };

    let agg_phrases: Vec<Option<&lexicon::AggregatePhrase>> = query
        .select
        .iter()
        .map(|item| {
            item.aggregate.map(|a| {
                let options: Vec<_> = lex.aggregate_phrases().for_kind(a).collect();
                *options.choose(rng).unwrap()
            })
        })
        .collect();
    let order_phrases: Vec<&lexicon::OrderPhrase> = query
        .order_by
        .iter()
        .map(|key| {
            let kind = kind_of(&key.field);
            let options: Vec<_> = lex.order_phrases().iter().filter(|p| p.applies_to(kind)).collect();
            *options.choose(rng).unwrap()
        })
        .collect();

    let mut w = Writer {
        text: String::with_capacity(160),
        chars: 0,
        mentions: Vec::new(),
    };
    for piece in &template.pieces {
        match piece {
            Piece::Text(t) => w.push(t),
            Piece::Slot(Slot::Table) => w.mention(MentionRole::Table, 0, &surface(EntityKind::Table, &query.table)),
            Piece::Slot(Slot::Fields) => {
                let n = query.select.len();
                for (i, item) in query.select.iter().enumerate() {
                    if i > 0 {
                        w.push(if i + 1 == n { " and " } else { ", " });
                    }
                    if let Some(phrase) = agg_phrases[i] {
                        w.mention(MentionRole::AggregateFn, i, phrase.function_text());
                        w.push(&phrase.prefix()[phrase.function_text().len()..]);
                    }
                    w.mention(MentionRole::SelectField, i, &surface(EntityKind::Field, &item.field));
                }
            }
            Piece::Slot(Slot::JoinSuffix) => {
                if let Some(j) = &query.join {
                    w.push(" join with ");
                    w.mention(MentionRole::JoinTable, 0, &surface(EntityKind::Table, &j.right_table));
                    w.push(" on ");
                    w.mention(MentionRole::JoinLeftKey, 0, &surface(EntityKind::Field, &j.left_key));
                    w.push(" equals ");
                    w.mention(MentionRole::JoinRightKey, 0, &surface(EntityKind::Field, &j.right_key));
                }
            }
            Piece::Slot(Slot::WhereSuffix) => {
                for (i, f) in query.filters.iter().enumerate() {
                    w.push(if i == 0 { " where " } else { " and " });
                    w.mention(MentionRole::FilterField, i, &surface(EntityKind::Field, &f.field));
                    w.push(" ");
                    w.push(operator_phrase(f.operator, kind_of(&f.field)));
                    w.push(" ");
                    w.push(&f.literal.to_string());
                }
            }
            Piece::Slot(Slot::OrderSuffix) => {
                for (i, key) in query.order_by.iter().enumerate() {
                    w.push(if i == 0 { " " } else { ", " });
                    let side = match key.direction {
                        crate::sql::Direction::Asc => &order_phrases[i].asc,
                        crate::sql::Direction::Desc => &order_phrases[i].desc,
                    };
                    let field = surface(EntityKind::Field, &key.field);
                    let base = w.chars;
                    w.push(&side.render(&field));
                    let (fa, fb) = side.field_range(&field);
                    let (da, db) = side.direction_range(&field);
                    w.mentions.push(Mention {
                        role: MentionRole::OrderField,
                        slot: i,
                        start: base + fa,
                        end: base + fb,
                    });
                    w.mentions.push(Mention {
                        role: MentionRole::OrderDirection,
                        slot: i,
                        start: base + da,
                        end: base + db,
                    });
                }
            }
        }
    }
    Instruction {
        text: w.text,
        record: SubstitutionRecord {
            entities,
            mentions: w.mentions,
        },
    }
}

/// Empirical (table, field) substitution rates over eligible entities.
pub fn substitution_rates<'a>(
    records: impl IntoIterator<Item = &'a SubstitutionRecord>,
) -> Result<(f64, f64), EmptyDataset> {
    let mut n = 0usize;
    let mut counts = [[0usize; 2]; 2];
    for record in records {
        n += 1;
        for e in record.entities.iter().filter(|e| e.eligible) {
            let k = (e.kind == EntityKind::Field) as usize;
            counts[k][0] += e.substituted() as usize;
            counts[k][1] += 1;
        }
    }
    if n == 0 {
        return Err(EmptyDataset);
    }
    let rate = |[hit, total]: [usize; 2]| if total == 0 { 0.0 } else { hit as f64 / total as f64 };
    Ok((rate(counts[0]), rate(counts[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::level::Level;
    use crate::query_gen::{gen_query, LevelRecipe};
    use crate::schema::{gen_schema, ColumnDef, TableDef};
    use crate::seed::stream;
    use crate::sql::{parse_sql, Direction};

    fn schema_of(table: &str, cols: &[(&str, &str)]) -> SchemaContext {
        SchemaContext {
            main: TableDef {
                name: table.into(),
                columns: cols
                    .iter()
                    .map(|(n, t)| ColumnDef {
                        name: n.to_string(),
                        sql_type: t.parse().unwrap(),
                    })
                    .collect(),
            },
            join: None,
            level: Level::Cs2,
            seed_trace: None,
        }
    }

    fn chars(s: &str, m: &Mention) -> String {
        s.chars().skip(m.start).take(m.end - m.start).collect()
    }

    /// Finds a seed whose template draw is the given template id.
    fn seed_for_template(pool: &VocabPool, id: &str) -> u64 {
        (0..10_000)
            .find(|&s| pool.lexicon().templates().choose(&mut stream(s)).unwrap().id == id)
            .unwrap()
    }

    #[test]
    fn base_cs1_reference_instruction() {
        let pool = VocabPool::builtin();
        let schema = schema_of("orders", &[("type", "CHAR"), ("date", "INT")]);
        let query = parse_sql("SELECT type, date FROM orders").unwrap();
        let seed = seed_for_template(&pool, "t01");
        let ins = gen_instruction(&query, &schema, Variant::Base, &pool, &mut stream(seed));
        assert_eq!(ins.text, "show me the type and date from the orders table");
    }

    #[test]
    fn base_cs2_order_suffix() {
        let pool = VocabPool::builtin();
        let schema = schema_of("links", &[("category", "CHAR"), ("value", "TEXT")]);
        let query = parse_sql("SELECT category, value FROM links ORDER BY value ASC").unwrap();
        let want = "show me the category and value from the links table ordered by value in ascending order";
        let found = (0..20_000)
            .map(|s| gen_instruction(&query, &schema, Variant::Base, &pool, &mut stream(s)).text)
            .any(|t| t == want);
        assert!(found);
    }

    #[test]
    fn mentions_locate_their_entities() {
        let pool = VocabPool::builtin();
        for level in Level::ALL {
            let recipe = LevelRecipe::for_level(level);
            for seed in 0..300 {
                let mut rng = stream(seed);
                let schema = gen_schema(&pool, level, &mut rng);
                let query = gen_query(&schema, &recipe, &mut rng);
                let ins = gen_instruction(&query, &schema, Variant::Syn, &pool, &mut rng);
                let rec = &ins.record;
                let table = rec.mention(MentionRole::Table, 0).unwrap();
                assert_eq!(chars(&ins.text, table), rec.surface(EntityKind::Table, &query.table).unwrap());
                for (i, item) in query.select.iter().enumerate() {
                    let m = rec.mention(MentionRole::SelectField, i).unwrap();
                    assert_eq!(chars(&ins.text, m), rec.surface(EntityKind::Field, &item.field).unwrap());
                    assert_eq!(rec.mention(MentionRole::AggregateFn, i).is_some(), item.aggregate.is_some());
                }
                for (i, key) in query.order_by.iter().enumerate() {
                    let m = rec.mention(MentionRole::OrderField, i).unwrap();
                    assert_eq!(chars(&ins.text, m), rec.surface(EntityKind::Field, &key.field).unwrap());
                    let d = rec.mention(MentionRole::OrderDirection, i).unwrap();
                    assert!(d.end > d.start);
                }
                for (i, f) in query.filters.iter().enumerate() {
                    let m = rec.mention(MentionRole::FilterField, i).unwrap();
                    assert_eq!(chars(&ins.text, m), rec.surface(EntityKind::Field, &f.field).unwrap());
                }
                if let Some(j) = &query.join {
                    let m = rec.mention(MentionRole::JoinTable, 0).unwrap();
                    assert_eq!(chars(&ins.text, m), rec.surface(EntityKind::Table, &j.right_table).unwrap());
                }
            }
        }
    }

    #[test]
    fn base_variant_uses_canonical_names_verbatim() {
        let pool = VocabPool::builtin();
        for seed in 0..500 {
            let mut rng = stream(seed);
            let schema = gen_schema(&pool, Level::Cs5, &mut rng);
            let query = gen_query(&schema, &LevelRecipe::for_level(Level::Cs5), &mut rng);
            let ins = gen_instruction(&query, &schema, Variant::Base, &pool, &mut rng);
            assert!(ins.record.entities.iter().all(|e| !e.substituted()));
            for item in &query.select {
                assert!(ins.text.contains(&item.field));
            }
        }
    }

    #[test]
    fn synonym_rates_and_surfaces() {
        let pool = VocabPool::builtin();
        let recipe = LevelRecipe::for_level(Level::Cs1);
        let mut records = Vec::new();
        for seed in 0..20_000 {
            let mut rng = stream(seed);
            let schema = gen_schema(&pool, Level::Cs1, &mut rng);
            let query = gen_query(&schema, &recipe, &mut rng);
            let ins = gen_instruction(&query, &schema, Variant::Syn, &pool, &mut rng);
            for e in ins.record.entities.iter().filter(|e| e.substituted()) {
                let list = match e.kind {
                    EntityKind::Table => &pool.table(&e.name).unwrap().synonyms,
                    EntityKind::Field => &pool.field(&e.name).unwrap().synonyms,
                };
                assert!(list.contains(&e.surface));
            }
            records.push(ins.record);
        }
        let (t, f) = substitution_rates(&records).unwrap();
        assert!((t - 0.8).abs() <= 0.02, "table rate {t}");
        assert!((f - 0.5).abs() <= 0.02, "field rate {f}");
    }

    #[test]
    fn rates_edge_cases() {
        assert_eq!(substitution_rates(std::iter::empty()), Err(EmptyDataset));
        let rec = SubstitutionRecord {
            entities: vec![Substitution {
                kind: EntityKind::Table,
                name: "orders".into(),
                surface: "purchases".into(),
                eligible: true,
            }],
            mentions: vec![],
        };
        assert_eq!(substitution_rates([&rec]), Ok((1.0, 0.0)));
    }

    #[test]
    fn direction_words_distinguish_directions() {
        let pool = VocabPool::builtin();
        let schema = schema_of("links", &[("category", "CHAR"), ("value", "TEXT")]);
        let mut asc = HashSet::new();
        let mut desc = HashSet::new();
        for seed in 0..2000 {
            for dir in [Direction::Asc, Direction::Desc] {
                let mut q = parse_sql("SELECT category FROM links ORDER BY value").unwrap();
                q.order_by[0].direction = dir;
                let ins = gen_instruction(&q, &schema, Variant::Base, &pool, &mut stream(seed));
                let m = ins.record.mention(MentionRole::OrderDirection, 0).unwrap();
                let word = chars(&ins.text, m);
                if dir == Direction::Asc { asc.insert(word) } else { desc.insert(word) };
            }
        }
        assert!(asc.is_disjoint(&desc), "{asc:?} / {desc:?}");
    }
}
