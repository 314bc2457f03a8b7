//! One- and two-table schema contexts and their seeded generation.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::level::Level;
use crate::vocab::{SqlType, VocabPool};

pub const MIN_COLUMNS: usize = 2;
pub const MAX_COLUMNS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnDef {
    pub name: String,
    pub sql_type: SqlType,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_type(&self, name: &str) -> Option<SqlType> {
        self.column(name).map(|c| c.sql_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SchemaContext {
    pub main: TableDef,
    pub join: Option<TableDef>,
    pub level: Level,
    /// Sub-seed of the example that produced this schema, when known.
    pub seed_trace: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("table {table} has {count} columns (allowed {MIN_COLUMNS} to {MAX_COLUMNS})")]
    ColumnCount { table: String, count: usize },
    #[error("table {table} repeats column {column}")]
    DuplicateColumn { table: String, column: String },
    #[error("a join table is only allowed at CS5 (level is {0})")]
    UnexpectedJoinTable(Level),
    #[error("join table repeats the main table {0}")]
    SelfJoin(String),
}

impl SchemaContext {
    pub fn tables(&self) -> impl Iterator<Item = &TableDef> {
        std::iter::once(&self.main).chain(self.join.as_ref())
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        for t in self.tables() {
            if !(MIN_COLUMNS..=MAX_COLUMNS).contains(&t.columns.len()) {
                return Err(SchemaError::ColumnCount {
                    table: t.name.clone(),
                    count: t.columns.len(),
                });
            }
            for (i, c) in t.columns.iter().enumerate() {
                if t.columns[..i].iter().any(|d| d.name == c.name) {
                    return Err(SchemaError::DuplicateColumn {
                        table: t.name.clone(),
                        column: c.name.clone(),
                    });
                }
            }
        }
        if let Some(j) = &self.join {
            if !self.level.allows_join() {
                return Err(SchemaError::UnexpectedJoinTable(self.level));
            }
            if j.name == self.main.name {
                return Err(SchemaError::SelfJoin(j.name.clone()));
            }
        }
        Ok(())
    }
}

/// Draws `n` distinct fields from `candidates` (pool indices), skipping any
/// in `exclude`, and gives each a type from its allowed list.
fn draw_columns<R: Rng + ?Sized>(
    pool: &VocabPool,
    candidates: &[usize],
    exclude: &[&str],
    n: usize,
    rng: &mut R,
) -> Vec<ColumnDef> {
    let eligible: Vec<usize> = if exclude.is_empty() {
        candidates.to_vec()
    } else {
        candidates
            .iter()
            .copied()
            .filter(|&f| !exclude.contains(&pool.fields()[f].name.as_str()))
            .collect()
    };
    let n = n.min(eligible.len());
    index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|i| {
            let field = &pool.fields()[eligible[i]];
            let sql_type = field.types[rng.gen_range(0..field.types.len())];
            ColumnDef {
                name: field.name.clone(),
                sql_type,
            }
        })
        .collect()
}

/// Generates the schema for one example.
///
/// The main table gets a uniform column count in `[2, 12]`. At CS5 a second,
/// different table is drawn with its own uniform count and fields disjoint
/// from the main table's.
pub fn gen_schema<R: Rng + ?Sized>(pool: &VocabPool, level: Level, rng: &mut R) -> SchemaContext {
    let n_tables = pool.tables().len();
    let main_idx = rng.gen_range(0..n_tables);
    let n_main = rng.gen_range(MIN_COLUMNS..=MAX_COLUMNS);
    let main = TableDef {
        name: pool.tables()[main_idx].name.clone(),
        columns: draw_columns(pool, pool.candidate_indices(main_idx), &[], n_main, rng),
    };
    let join = level.allows_join().then(|| {
        let mut join_idx = rng.gen_range(0..n_tables - 1);
        if join_idx >= main_idx {
            join_idx += 1;
        }
        let n_join = rng.gen_range(MIN_COLUMNS..=MAX_COLUMNS);
        let taken: Vec<&str> = main.columns.iter().map(|c| c.name.as_str()).collect();
        TableDef {
            name: pool.tables()[join_idx].name.clone(),
            columns: draw_columns(pool, pool.candidate_indices(join_idx), &taken, n_join, rng),
        }
    });
    SchemaContext {
        main,
        join,
        level,
        seed_trace: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    #[test]
    fn single_table_below_cs5() {
        let pool = VocabPool::builtin();
        for seed in 0..200 {
            let s = gen_schema(&pool, Level::Cs1, &mut stream(seed));
            assert!(s.join.is_none());
            s.validate().unwrap();
            for c in &s.main.columns {
                let entry = pool.field(&c.name).unwrap();
                assert!(entry.types.contains(&c.sql_type));
                assert!(entry.allowed_in(&s.main.name));
            }
        }
    }

    #[test]
    fn cs5_tables_are_distinct_and_disjoint() {
        let pool = VocabPool::builtin();
        for seed in 0..500 {
            let s = gen_schema(&pool, Level::Cs5, &mut stream(seed));
            s.validate().unwrap();
            let j = s.join.as_ref().unwrap();
            assert_ne!(j.name, s.main.name);
            for c in &j.columns {
                assert!(s.main.column(&c.name).is_none());
                assert!(pool.field(&c.name).unwrap().allowed_in(&j.name));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let pool = VocabPool::builtin();
        let a = gen_schema(&pool, Level::Cs5, &mut stream(9));
        let b = gen_schema(&pool, Level::Cs5, &mut stream(9));
        assert_eq!(a, b);
    }

    #[test]
    fn column_counts_are_uniform() {
        let pool = VocabPool::builtin();
        let mut rng = stream(1);
        let mut hist = [0usize; MAX_COLUMNS + 1];
        let n = 20_000;
        for _ in 0..n {
            hist[gen_schema(&pool, Level::Cs1, &mut rng).main.columns.len()] += 1;
        }
        for (count, &seen) in hist.iter().enumerate().skip(MIN_COLUMNS) {
            let freq = seen as f64 / n as f64;
            assert!((freq - 1.0 / 11.0).abs() <= 0.01, "{count}: {freq}");
        }
    }

    #[test]
    fn validate_catches_bad_contexts() {
        let ty: SqlType = "INT".parse().unwrap();
        let col = |n: &str| ColumnDef {
            name: n.into(),
            sql_type: ty,
        };
        let mut s = SchemaContext {
            main: TableDef {
                name: "orders".into(),
                columns: vec![col("a")],
            },
            join: None,
            level: Level::Cs1,
            seed_trace: None,
        };
        assert!(matches!(s.validate(), Err(SchemaError::ColumnCount { .. })));
        s.main.columns.push(col("a"));
        assert!(matches!(s.validate(), Err(SchemaError::DuplicateColumn { .. })));
        s.main.columns[1] = col("b");
        s.join = Some(s.main.clone());
        assert_eq!(s.validate(), Err(SchemaError::UnexpectedJoinTable(Level::Cs1)));
        s.level = Level::Cs5;
        assert_eq!(s.validate(), Err(SchemaError::SelfJoin("orders".into())));
    }
}
