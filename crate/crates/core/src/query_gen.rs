//! Gold query generation from a schema, following each level's recipe.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::level::Level;
use crate::schema::{ColumnDef, SchemaContext};
use crate::sql::{
    Aggregate, Direction, JoinClause, Literal, Operator, OrderKey, SelectItem, SqlQuery, WhereFilter, MAX_FILTERS,
};
use crate::vocab::{BaseKind, SqlType, TypeKeyword};

/// Values used for text equality filters.
const TEXT_VALUES: &[&str] = &[
    "active", "pending", "closed", "open", "draft", "final", "archived", "approved", "rejected", "new",
    "gold", "silver", "basic", "premium", "north", "south", "east", "west", "red", "blue",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dataset is empty")]
pub struct EmptyDataset;

/// Per-level clause probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRecipe {
    pub level: Level,
    pub p_order_by: f64,
    pub p_no_aggregate_per_column: f64,
    pub p_where: f64,
    pub where_filter_range: (usize, usize),
}

impl LevelRecipe {
    pub fn for_level(level: Level) -> LevelRecipe {
        LevelRecipe {
            level,
            p_order_by: if level.allows_order_by() { 0.9 } else { 0.0 },
            p_no_aggregate_per_column: if level.allows_aggregates() { 0.2 } else { 1.0 },
            p_where: if level.allows_where() { 0.8 } else { 0.0 },
            where_filter_range: (1, MAX_FILTERS),
        }
    }
}

fn literal_for<R: Rng + ?Sized>(ty: SqlType, op: Operator, rng: &mut R) -> Literal {
    match ty.base_kind() {
        BaseKind::Numeric if ty.keyword().is_integral() => Literal::Int(rng.gen_range(0..=1000)),
        BaseKind::Numeric => Literal::Decimal(rng.gen_range(0..=100_000)),
        BaseKind::Text if op == Operator::Like => {
            let c = rng.gen_range(b'a'..=b'z') as char;
            Literal::Str(format!("%{c}%"))
        }
        BaseKind::Text => Literal::Str(TEXT_VALUES.choose(rng).unwrap().to_string()),
        BaseKind::Temporal => {
            let mut date = || {
                format!(
                    "{:04}-{:02}-{:02}",
                    rng.gen_range(2000..=2024),
                    rng.gen_range(1..=12),
                    rng.gen_range(1..=28)
                )
            };
            let d = match ty.keyword() {
                TypeKeyword::Time => String::new(),
                _ => date(),
            };
            let time = format!(
                "{:02}:{:02}:{:02}",
                rng.gen_range(0..24),
                rng.gen_range(0..60),
                rng.gen_range(0..60)
            );
            Literal::Str(match ty.keyword() {
                TypeKeyword::Date => d,
                TypeKeyword::Time => time,
                _ => format!("{d} {time}"),
            })
        }
        BaseKind::Boolean => Literal::Bool(rng.gen()),
        BaseKind::Binary | BaseKind::Spatial => unreachable!("column kind is not filterable"),
    }
}

/// Builds the gold query for `schema` under `recipe`.
///
/// Select columns, order keys and filters all come from the main table; the
/// join table only contributes the right-hand join key.
pub fn gen_query<R: Rng + ?Sized>(schema: &SchemaContext, recipe: &LevelRecipe, rng: &mut R) -> SqlQuery {
    debug_assert_eq!(schema.level, recipe.level);
    let cols = &schema.main.columns;
    let n = cols.len();

    let n_select = rng.gen_range(1..=n);
    let mut select: Vec<SelectItem> = index::sample(rng, n, n_select)
        .into_iter()
        .map(|i| SelectItem::bare(cols[i].name.clone()))
        .collect();

    if recipe.level.allows_aggregates() {
        for item in &mut select {
            if !rng.gen_bool(recipe.p_no_aggregate_per_column) {
                let kind = schema.main.column_type(&item.field).unwrap().base_kind();
                item.aggregate = Aggregate::legal_for(kind).choose(rng).copied();
            }
        }
    }

    let mut order_by = Vec::new();
    if recipe.level.allows_order_by() && rng.gen_bool(recipe.p_order_by) {
        let n_keys = rng.gen_range(1..=n);
        for i in index::sample(rng, n, n_keys) {
            let direction = if rng.gen() { Direction::Asc } else { Direction::Desc };
            order_by.push(OrderKey {
                field: cols[i].name.clone(),
                direction,
            });
        }
    }

    let mut filters = Vec::new();
    if recipe.level.allows_where() && rng.gen_bool(recipe.p_where) {
        let filterable: Vec<&ColumnDef> = cols
            .iter()
            .filter(|c| !Operator::legal_for(c.sql_type.base_kind()).is_empty())
            .collect();
        if !filterable.is_empty() {
            let (lo, hi) = recipe.where_filter_range;
            let n_filters = rng.gen_range(lo..=hi.min(filterable.len()));
            for i in index::sample(rng, filterable.len(), n_filters) {
                let col = filterable[i];
                let operator = *Operator::legal_for(col.sql_type.base_kind()).choose(rng).unwrap();
                let literal = literal_for(col.sql_type, operator, rng);
                filters.push(WhereFilter {
                    field: col.name.clone(),
                    operator,
                    literal,
                });
            }
        }
    }

    let join = schema.join.as_ref().and_then(|right| {
        let pairs: Vec<(&str, &str)> = cols
            .iter()
            .flat_map(|l| {
                right
                    .columns
                    .iter()
                    .filter(move |r| r.sql_type == l.sql_type)
                    .map(move |r| (l.name.as_str(), r.name.as_str()))
            })
            .collect();
        pairs.choose(rng).map(|&(l, r)| JoinClause {
            right_table: right.name.clone(),
            left_key: l.to_string(),
            right_key: r.to_string(),
        })
    });

    SqlQuery {
        select,
        table: schema.main.name.clone(),
        join,
        filters,
        order_by,
    }
}

/// Fraction of queries carrying a JOIN clause.
pub fn join_rate<'a>(queries: impl IntoIterator<Item = &'a SqlQuery>) -> Result<f64, EmptyDataset> {
    let (mut joined, mut total) = (0usize, 0usize);
    for q in queries {
        total += 1;
        joined += q.join.is_some() as usize;
    }
    if total == 0 {
        return Err(EmptyDataset);
    }
    Ok(joined as f64 / total as f64)
}
