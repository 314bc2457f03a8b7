//! Examples, corpus generation, split files and manifests.
//!
//! Records are JSON lines with keys in a fixed order:
//! `id, instruction, context, response, level, variant, substitutions`.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruction::{gen_instruction, EntityKind, MentionRole, SubstitutionRecord};
use crate::level::{Level, Variant};
use crate::query_gen::{gen_query, LevelRecipe};
use crate::schema::{gen_schema, SchemaContext};
use crate::seed::{domain, stream, sub_seed};
use crate::sql::{parse_create_tables, parse_sql, render_create_table, render_sql, SqlQuery};
use crate::vocab::VocabPool;

pub const DEFAULT_COUNT: usize = 100_000;
/// Totals must be a multiple of this so the split percentages are exact.
pub const COUNT_GRANULARITY: usize = 200;
/// Generation gives up after this many candidates per requested example.
const MAX_CANDIDATES_PER_EXAMPLE: usize = 20;
const CHUNK: usize = 2048;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("example {id} repeats an (instruction, context) pair already written")]
    DuplicateExample { id: u64 },
    #[error("count {0} must be a positive multiple of {COUNT_GRANULARITY}")]
    BadCount(usize),
    #[error("only {got} distinct examples after {tried} candidates (wanted {wanted})")]
    Exhausted { wanted: usize, got: usize, tried: usize },
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: u64,
    pub instruction: String,
    pub context: String,
    pub response: String,
    pub level: Level,
    pub variant: Variant,
    pub substitutions: SubstitutionRecord,
}

impl Example {
    pub fn query(&self) -> Result<SqlQuery, String> {
        parse_sql(&self.response).map_err(|e| format!("response: {e}"))
    }

    /// Rebuilds the schema context from the context text.
    pub fn schema(&self) -> Result<SchemaContext, String> {
        let mut tables = parse_create_tables(&self.context).map_err(|e| format!("context: {e}"))?;
        if tables.len() > 2 {
            return Err(format!("context defines {} tables", tables.len()));
        }
        let join = (tables.len() == 2).then(|| tables.pop().unwrap());
        let main = tables.pop().unwrap();
        Ok(SchemaContext {
            main,
            join,
            level: self.level,
            seed_trace: None,
        })
    }

    /// Checks every invariant a generated example satisfies.
    pub fn validate(&self) -> Result<(), String> {
        let query = self.query()?;
        if render_sql(&query) != self.response {
            return Err("response is not in canonical form".into());
        }
        let schema = self.schema()?;
        schema.validate().map_err(|e| e.to_string())?;
        if render_create_table(&schema) != self.context {
            return Err("context is not in canonical form".into());
        }
        query.validate(&schema).map_err(|e| e.to_string())?;
        let level_ok = (self.level.allows_order_by() || query.order_by.is_empty())
            && (self.level.allows_aggregates() || !query.has_aggregates())
            && (self.level.allows_where() || query.filters.is_empty())
            && (self.level.allows_join() || query.join.is_none());
        if !level_ok {
            return Err(format!("query uses clauses beyond {}", self.level));
        }
        if self.instruction.trim().is_empty() {
            return Err("empty instruction".into());
        }
        let chars: Vec<char> = self.instruction.chars().collect();
        for m in &self.substitutions.mentions {
            if m.start > m.end || m.end > chars.len() {
                return Err(format!("mention {:?} out of bounds", m.role));
            }
        }
        let rec = &self.substitutions;
        let check = |role: MentionRole, slot: usize, kind: EntityKind, name: &str| -> Result<(), String> {
            let m = rec.mention(role, slot).ok_or_else(|| format!("no {role:?} mention"))?;
            let text: String = chars[m.start..m.end].iter().collect();
            let surface = rec.surface(kind, name).ok_or_else(|| format!("no entity for {name}"))?;
            if text != surface {
                return Err(format!("{role:?} mention reads {text:?}, expected {surface:?}"));
            }
            if self.variant == Variant::Base && surface != name {
                return Err(format!("base variant renames {name} to {surface}"));
            }
            Ok(())
        };
        check(MentionRole::Table, 0, EntityKind::Table, &query.table)?;
        for (i, item) in query.select.iter().enumerate() {
            check(MentionRole::SelectField, i, EntityKind::Field, &item.field)?;
        }
        for (i, k) in query.order_by.iter().enumerate() {
            check(MentionRole::OrderField, i, EntityKind::Field, &k.field)?;
        }
        for (i, f) in query.filters.iter().enumerate() {
            check(MentionRole::FilterField, i, EntityKind::Field, &f.field)?;
        }
        if let Some(j) = &query.join {
            check(MentionRole::JoinTable, 0, EntityKind::Table, &j.right_table)?;
        }
        Ok(())
    }
}

/// The prompt frame used for training and for corruption pairs.
pub fn frame_prompt(example: &Example, include_response: bool) -> String {
    let mut s = format!(
        "### Instruction: {} ### Context: {} ### Response:",
        example.instruction, example.context
    );
    if include_response {
        s.push(' ');
        s.push_str(&example.response);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Validation => "validation.jsonl",
            Split::Test => "test.jsonl",
        }
    }

    /// Split sizes for `total` examples: 76.5% / 13.5% / 10%.
    pub fn sizes(total: usize) -> [usize; 3] {
        let train = total * 765 / 1000;
        let validation = total * 135 / 1000;
        [train, validation, total - train - validation]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateConfig {
    pub level: Level,
    pub variant: Variant,
    pub count: usize,
    pub seed: u64,
    /// Worker threads; output does not depend on this.
    pub workers: usize,
}

impl GenerateConfig {
    pub fn new(level: Level, variant: Variant, count: usize, seed: u64) -> Self {
        GenerateConfig {
            level,
            variant,
            count,
            seed,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClauseRates {
    pub order_by: f64,
    #[serde(rename = "where")]
    pub where_: f64,
    pub join: f64,
    pub aggregate: f64,
}

impl ClauseRates {
    pub fn measure<'a>(queries: impl IntoIterator<Item = &'a SqlQuery>) -> ClauseRates {
        let mut c = [0usize; 5];
        for q in queries {
            c[0] += !q.order_by.is_empty() as usize;
            c[1] += !q.filters.is_empty() as usize;
            c[2] += q.join.is_some() as usize;
            c[3] += q.has_aggregates() as usize;
            c[4] += 1;
        }
        let n = c[4].max(1) as f64;
        ClauseRates {
            order_by: c[0] as f64 / n,
            where_: c[1] as f64 / n,
            join: c[2] as f64 / n,
            aggregate: c[3] as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub version: String,
    pub master_seed: u64,
    pub level: Level,
    pub variant: Variant,
    pub total: usize,
    pub splits: SplitSizes,
    pub vocab_sha256: String,
    pub lexicon_sha256: String,
    /// Candidates dropped because their (instruction, context) pair repeated.
    pub duplicates_skipped: usize,
    /// Clause rates measured on the train split.
    pub train_clause_rates: ClauseRates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: Manifest,
    /// All examples in id order; splits are contiguous id ranges.
    pub examples: Vec<Example>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Example] {
        let [train, validation, _] = Split::sizes(self.examples.len());
        match split {
            Split::Train => &self.examples[..train],
            Split::Validation => &self.examples[train..train + validation],
            Split::Test => &self.examples[train + validation..],
        }
    }

    /// Writes the three split files and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir)?;
        let mut writer = SplitWriter::new();
        for split in Split::ALL {
            let file = fs::File::create(dir.join(split.file_name()))?;
            writer.write_split(self.split(split), BufWriter::new(file))?;
        }
        let mut manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        manifest.push('\n');
        fs::write(dir.join("manifest.json"), manifest)?;
        Ok(())
    }
}

struct Candidate {
    example: Example,
    query: SqlQuery,
}

fn make_candidate(pool: &VocabPool, config: &GenerateConfig, recipe: &LevelRecipe, index: u64) -> Candidate {
    let seed = sub_seed(config.seed, domain::EXAMPLE, index);
    let mut rng = stream(seed);
    let mut schema = gen_schema(pool, config.level, &mut rng);
    schema.seed_trace = Some(seed);
    let query = gen_query(&schema, recipe, &mut rng);
    let instruction = gen_instruction(&query, &schema, config.variant, pool, &mut rng);
    Candidate {
        example: Example {
            id: 0,
            instruction: instruction.text,
            context: render_create_table(&schema),
            response: render_sql(&query),
            level: config.level,
            variant: config.variant,
            substitutions: instruction.record,
        },
        query,
    }
}

fn dedup_key(e: &Example) -> String {
    let mut k = String::with_capacity(e.instruction.len() + e.context.len() + 1);
    k.push_str(&e.instruction);
    k.push('\u{0}');
    k.push_str(&e.context);
    k
}

/// Generates a deduplicated, shuffled corpus.
///
/// Candidate `i` is a pure function of `(seed, i)`. Candidates are taken in
/// index order, skipping any whose (instruction, context) pair was already
/// taken, until `count` remain; they are then shuffled by the seed and
/// numbered by position.
pub fn generate_corpus(pool: &VocabPool, config: &GenerateConfig) -> Result<Corpus, DatasetError> {
    if config.count == 0 || !config.count.is_multiple_of(COUNT_GRANULARITY) {
        return Err(DatasetError::BadCount(config.count));
    }
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| DatasetError::Workers(e.to_string()))?;
    let recipe = LevelRecipe::for_level(config.level);
    let max_candidates = config.count * MAX_CANDIDATES_PER_EXAMPLE;
    let mut seen = HashSet::with_capacity(config.count);
    let mut kept: Vec<Candidate> = Vec::with_capacity(config.count);
    let mut duplicates = 0;
    let mut next = 0usize;
    while kept.len() < config.count {
        if next >= max_candidates {
            return Err(DatasetError::Exhausted {
                wanted: config.count,
                got: kept.len(),
                tried: next,
            });
        }
        let want = (config.count - kept.len()).clamp(64, CHUNK);
        let range = next as u64..(next + want) as u64;
        let chunk: Vec<Candidate> = workers.install(|| {
            range
                .into_par_iter()
                .map(|i| make_candidate(pool, config, &recipe, i))
                .collect()
        });
        next += want;
        for c in chunk {
            if kept.len() == config.count {
                break;
            }
            if seen.insert(dedup_key(&c.example)) {
                kept.push(c);
            } else {
                duplicates += 1;
            }
        }
    }
    drop(seen);
    kept.shuffle(&mut stream(sub_seed(config.seed, domain::SHUFFLE, 0)));
    for (i, c) in kept.iter_mut().enumerate() {
        c.example.id = i as u64;
    }
    let [train, validation, test] = Split::sizes(config.count);
    let train_clause_rates = ClauseRates::measure(kept[..train].iter().map(|c| &c.query));
    let manifest = Manifest {
        generator: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.seed,
        level: config.level,
        variant: config.variant,
        total: config.count,
        splits: SplitSizes {
            train,
            validation,
            test,
        },
        vocab_sha256: pool.vocab_digest().to_string(),
        lexicon_sha256: pool.lexicon_digest().to_string(),
        duplicates_skipped: duplicates,
        train_clause_rates,
    };
    Ok(Corpus {
        manifest,
        examples: kept.into_iter().map(|c| c.example).collect(),
    })
}

/// Writes split files while enforcing that no (instruction, context) pair
/// appears twice across everything written through it.
#[derive(Debug, Default)]
pub struct SplitWriter {
    seen: HashSet<String>,
}

impl SplitWriter {
    pub fn new() -> Self {
        SplitWriter::default()
    }

    pub fn write_split<W: Write>(&mut self, examples: &[Example], mut sink: W) -> Result<usize, DatasetError> {
        for e in examples {
            if !self.seen.insert(dedup_key(e)) {
                return Err(DatasetError::DuplicateExample { id: e.id });
            }
            serde_json::to_writer(&mut sink, e).map_err(io::Error::from)?;
            sink.write_all(b"\n")?;
        }
        sink.flush()?;
        Ok(examples.len())
    }
}

/// Reads JSON-lines examples; blank lines are skipped.
pub fn read_examples<R: BufRead>(reader: R) -> Result<Vec<Example>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|source| DatasetError::Json { line: i + 1, source })?;
        out.push(e);
    }
    Ok(out)
}

pub fn read_examples_file(path: &Path) -> Result<Vec<Example>, DatasetError> {
    read_examples(io::BufReader::new(fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orders_example() -> Example {
        Example {
            id: 0,
            instruction: "show me the type and date from the orders table".into(),
            context: "CREATE TABLE orders ( type CHAR, date INT )".into(),
            response: "SELECT type, date FROM orders".into(),
            level: Level::Cs1,
            variant: Variant::Base,
            substitutions: SubstitutionRecord::default(),
        }
    }

    #[test]
    fn frames_prompt_exactly() {
        let e = orders_example();
        assert_eq!(
            frame_prompt(&e, true),
            "### Instruction: show me the type and date from the orders table ### Context: \
             CREATE TABLE orders ( type CHAR, date INT ) ### Response: SELECT type, date FROM orders"
        );
        assert!(frame_prompt(&e, false).ends_with("### Response:"));
    }

    #[test]
    fn split_sizes_are_exact() {
        assert_eq!(Split::sizes(100_000), [76_500, 13_500, 10_000]);
        assert_eq!(Split::sizes(200), [153, 27, 20]);
    }

    #[test]
    fn record_keys_in_fixed_order() {
        let line = serde_json::to_string(&orders_example()).unwrap();
        let keys = ["\"id\"", "\"instruction\"", "\"context\"", "\"response\"", "\"level\"", "\"variant\"", "\"substitutions\""];
        let pos: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
        assert!(line.contains("\"level\":\"CS1\",\"variant\":\"base\""));
    }

    #[test]
    fn write_read_round_trip_and_duplicates() {
        let pool = VocabPool::builtin();
        let corpus = generate_corpus(&pool, &GenerateConfig::new(Level::Cs4, Variant::Syn, 400, 3)).unwrap();
        let mut buf = Vec::new();
        let n = SplitWriter::new().write_split(&corpus.examples, &mut buf).unwrap();
        assert_eq!(n, 400);
        let back = read_examples(&buf[..]).unwrap();
        assert_eq!(back, corpus.examples);

        let mut writer = SplitWriter::new();
        writer.write_split(&corpus.examples[..1], io::sink()).unwrap();
        let err = writer.write_split(&corpus.examples[..1], io::sink()).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateExample { id: 0 }));
    }

    #[test]
    fn generated_examples_validate() {
        let pool = VocabPool::builtin();
        for level in Level::ALL {
            for variant in [Variant::Base, Variant::Syn] {
                let corpus = generate_corpus(&pool, &GenerateConfig::new(level, variant, 200, 5)).unwrap();
                for e in &corpus.examples {
                    e.validate().unwrap_or_else(|m| panic!("{level} {variant} #{}: {m}", e.id));
                }
                let ids: Vec<u64> = corpus.examples.iter().map(|e| e.id).collect();
                assert_eq!(ids, (0..200).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn validation_catches_tampering() {
        let mut e = orders_example();
        e.response = "select type, date from orders".into();
        assert!(e.validate().is_err());
        let mut e = orders_example();
        e.response = "SELECT type, date FROM orders ORDER BY type ASC".into();
        assert!(e.validate().unwrap_err().contains("beyond"));
        let mut e = orders_example();
        e.response = "SELECT kind FROM orders".into();
        assert!(e.validate().is_err());
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let pool = VocabPool::builtin();
        let mut cfg = GenerateConfig::new(Level::Cs5, Variant::Syn, 2000, 11);
        let a = generate_corpus(&pool, &cfg).unwrap();
        cfg.workers = 4;
        let b = generate_corpus(&pool, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_counts() {
        let pool = VocabPool::builtin();
        for count in [0, 150, 1001] {
            let err = generate_corpus(&pool, &GenerateConfig::new(Level::Cs1, Variant::Base, count, 1)).unwrap_err();
            assert!(matches!(err, DatasetError::BadCount(_)));
        }
    }
}
