//! Seeded text-to-SQL corpus toolkit.
//!
//! The crate synthesizes instruction / schema / SQL triples at five command
//! levels (`CS1` plain `SELECT ... FROM`, up to `CS5` with a two-table join),
//! in a base variant that names schema objects verbatim and a synonym variant
//! that paraphrases them. Around the generator sit the pieces needed to use
//! such a corpus: a parser and canonical renderer for the restricted SQL
//! grammar, a partial-credit grader, corpus difficulty statistics, and a
//! builder for clean/corrupted prompt pairs.
//!
//! Everything is a pure function of its inputs and a master seed; each
//! example draws from its own sub-seeded stream, so output does not depend on
//! the number of worker threads.

pub mod cli;
pub mod corruption;
pub mod dataset;
pub mod grader;
pub mod instruction;
pub mod level;
pub mod query_gen;
pub mod schema;
pub mod seed;
pub mod sql;
pub mod stats;
pub mod vocab;

pub use corruption::{gen_pairs, verify_pair, CorruptionError, CorruptionFeature, CorruptionPair};
pub use dataset::{frame_prompt, generate_corpus, Corpus, Example, GenerateConfig, Manifest, Split};
pub use grader::{grade, grade_batch, GradeReport, Weights};
pub use instruction::{gen_instruction, Instruction, SubstitutionRecord};
pub use level::{Level, Variant};
pub use query_gen::{gen_query, LevelRecipe};
pub use schema::{gen_schema, ColumnDef, SchemaContext, TableDef};
pub use sql::{parse_sql, render_sql, SqlQuery};
pub use stats::{corpus_stats, CorpusStats, TextAnalyzer};
pub use vocab::{load_vocab, BaseKind, SqlType, VocabError, VocabPool};
