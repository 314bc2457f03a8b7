//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when data fails validation or grading input
//! is inconsistent, 2 for usage errors (bad flags, unsupported feature for
//! the dataset level).

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corruption::{gen_pairs, verify_pair, CorruptionError, CorruptionFeature, DEFAULT_BATCHES, DEFAULT_BATCH_SIZE};
use crate::dataset::{generate_corpus, DatasetError, read_examples_file, Example, GenerateConfig, Split, DEFAULT_COUNT};
use crate::grader::{grade_batch, GoldRecord, Weights};
use crate::instruction::lexicon::DEFAULT_LEXICON;
use crate::level::{Level, Variant};
use crate::stats::{corpus_stats, render_table, TextAnalyzer, DEFAULT_RARE_RANK, DEFAULT_STOPWORDS, DEFAULT_WORD_FREQ};
use crate::vocab::{VocabPool, DEFAULT_VOCAB};

#[derive(Debug, Parser)]
#[command(name = "stepsql", version, about = "Seeded text-to-SQL corpus toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct PoolArgs {
    /// Vocabulary file replacing the built-in one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Lexicon file replacing the built-in one.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

impl PoolArgs {
    fn load(&self) -> Result<VocabPool> {
        if self.vocab.is_none() && self.lexicon.is_none() {
            return Ok(VocabPool::builtin());
        }
        let vocab = read_or(self.vocab.as_deref(), DEFAULT_VOCAB)?;
        let lexicon = read_or(self.lexicon.as_deref(), DEFAULT_LEXICON)?;
        Ok(VocabPool::from_sources(&vocab, &lexicon)?)
    }
}

fn read_or(path: Option<&Path>, default: &str) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(default.to_string()),
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a corpus and write train/validation/test splits.
    Generate {
        #[arg(long)]
        level: Level,
        #[arg(long, default_value = "base")]
        variant: Variant,
        #[arg(long, default_value_t = DEFAULT_COUNT)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "STEPSQL_OUT")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Grade predictions against gold examples.
    Grade {
        /// Gold examples (a split file or a corpus directory).
        #[arg(long)]
        gold: PathBuf,
        /// JSON lines of `{"id": .., "prediction": ".."}`.
        #[arg(long)]
        pred: PathBuf,
        /// Component weights "structural,semantic,implementation".
        #[arg(long)]
        weights: Option<Weights>,
        /// Write per-example reports as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Report rarity, lexical density and readability of instructions.
    Stats {
        /// Split file or corpus directory; repeat to compare datasets.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        /// Frequency list, one word per line, most frequent first.
        #[arg(long)]
        freq: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RARE_RANK)]
        rare_rank: usize,
        #[arg(long)]
        json: bool,
    },
    /// Build clean/corrupted prompt pairs for one feature.
    Corrupt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        feature: CorruptionFeature,
        #[arg(long, default_value_t = DEFAULT_BATCHES)]
        batches: usize,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON lines; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Check every example for canonical form, validity and level gating.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Print one example with its prompt frame and mentions.
    Inspect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        id: u64,
    },
}

/// Failure that maps to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct DataFailure(String);

/// Failure that maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageFailure(String);

/// Reads a split file, or the three split files of a corpus directory.
fn load_examples(path: &Path) -> Result<Vec<Example>> {
    if path.is_dir() {
        let mut out = Vec::new();
        for split in Split::ALL {
            let file = path.join(split.file_name());
            out.extend(read_examples_file(&file).with_context(|| format!("reading {}", file.display()))?);
        }
        Ok(out)
    } else {
        read_examples_file(path).with_context(|| format!("reading {}", path.display()))
    }
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    id: u64,
    prediction: String,
}

#[derive(Debug, Serialize)]
struct ReportLine<'a> {
    id: u64,
    #[serde(flatten)]
    report: &'a crate::grader::GradeReport,
}

fn cmd_generate(
    level: Level,
    variant: Variant,
    count: usize,
    seed: u64,
    out: &Path,
    workers: usize,
    pool: &PoolArgs,
) -> Result<()> {
    let pool = pool.load()?;
    let config = GenerateConfig {
        workers,
        ..GenerateConfig::new(level, variant, count, seed)
    };
    let corpus = generate_corpus(&pool, &config).map_err(|e| match e {
        DatasetError::BadCount(_) => anyhow::Error::new(UsageFailure(e.to_string())),
        other => anyhow::Error::new(other),
    })?;
    corpus.write_to(out)?;
    let s = &corpus.manifest.splits;
    eprintln!(
        "wrote {} examples ({} / {} / {}) to {}",
        corpus.manifest.total,
        s.train,
        s.validation,
        s.test,
        out.display()
    );
    Ok(())
}

fn cmd_grade(gold: &Path, pred: &Path, weights: Option<Weights>, out: Option<&Path>, json: bool) -> Result<()> {
    let gold: Vec<GoldRecord> = load_examples(gold)?
        .into_iter()
        .map(|e| {
            let query = e.query().map_err(|m| DataFailure(format!("gold {}: {m}", e.id)))?;
            Ok(GoldRecord {
                id: e.id,
                level: e.level,
                query,
            })
        })
        .collect::<Result<_>>()?;
    let reader = io::BufReader::new(fs::File::open(pred).with_context(|| format!("reading {}", pred.display()))?);
    let mut predictions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine =
            serde_json::from_str(&line).map_err(|e| DataFailure(format!("{} line {}: {e}", pred.display(), i + 1)))?;
        predictions.push((p.id, p.prediction));
    }
    let summary =
        grade_batch(&predictions, &gold, &weights.unwrap_or_default()).map_err(|e| DataFailure(e.to_string()))?;
    if let Some(path) = out {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for (id, report) in &summary.reports {
            serde_json::to_writer(&mut w, &ReportLine { id: *id, report })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    if json {
        let mut v = serde_json::to_value(&summary)?;
        v.as_object_mut().map(|o| o.remove("reports"));
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print!("{summary}");
    }
    Ok(())
}

fn cmd_stats(
    data: &[PathBuf],
    freq: Option<&Path>,
    stopwords: Option<&Path>,
    rare_rank: usize,
    json: bool,
) -> Result<()> {
    let analyzer = TextAnalyzer::new(
        &read_or(stopwords, DEFAULT_STOPWORDS)?,
        &read_or(freq, DEFAULT_WORD_FREQ)?,
        rare_rank,
    );
    let mut rows = Vec::new();
    for path in data {
        let examples = load_examples(path)?;
        let stats = corpus_stats(&examples, &analyzer).map_err(|e| DataFailure(format!("{}: {e}", path.display())))?;
        rows.push((path.display().to_string(), stats));
    }
    if json {
        let v: serde_json::Map<String, serde_json::Value> = rows
            .iter()
            .map(|(n, s)| Ok((n.clone(), serde_json::to_value(s)?)))
            .collect::<Result<_>>()?;
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print!("{}", render_table(&rows));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_corrupt(
    data: &Path,
    feature: CorruptionFeature,
    batches: usize,
    batch_size: usize,
    seed: u64,
    out: Option<&Path>,
    pool: &PoolArgs,
) -> Result<()> {
    let pool = pool.load()?;
    let examples = load_examples(data)?;
    let pairs = gen_pairs(&examples, &pool, feature, batch_size, batches, seed).map_err(|e| match e {
        CorruptionError::UnsupportedFeature { .. } => anyhow::Error::new(UsageFailure(e.to_string())),
        other => anyhow::Error::new(DataFailure(other.to_string())),
    })?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    for pair in pairs.iter().flatten() {
        if !verify_pair(pair) {
            bail!(DataFailure(format!("pair for example {} failed verification", pair.example_id)));
        }
        serde_json::to_writer(&mut w, pair)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if let Some(path) = out {
        let manifest = CorruptManifest {
            feature,
            seed,
            batches,
            batch_size,
            source_examples: examples.len(),
            source: data.display().to_string(),
        };
        let mut name = path.as_os_str().to_owned();
        name.push(".manifest.json");
        fs::write(PathBuf::from(name), serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CorruptManifest {
    feature: CorruptionFeature,
    seed: u64,
    batches: usize,
    batch_size: usize,
    source_examples: usize,
    source: String,
}

fn cmd_validate(data: &Path) -> Result<()> {
    let examples = load_examples(data)?;
    let mut failures = 0usize;
    let mut ids = HashSet::new();
    let mut pairs = HashSet::new();
    for e in &examples {
        let mut problems = Vec::new();
        if let Err(m) = e.validate() {
            problems.push(m);
        }
        if !ids.insert(e.id) {
            problems.push("duplicate id".to_string());
        }
        if !pairs.insert((e.instruction.as_str(), e.context.as_str())) {
            problems.push("duplicate (instruction, context) pair".to_string());
        }
        for p in problems {
            failures += 1;
            eprintln!("example {}: {p}", e.id);
        }
    }
    if failures > 0 {
        bail!(DataFailure(format!("{failures} problems in {} examples", examples.len())));
    }
    println!("{} examples ok", examples.len());
    Ok(())
}

fn cmd_inspect(data: &Path, id: u64) -> Result<()> {
    let examples = load_examples(data)?;
    let Some(e) = examples.iter().find(|e| e.id == id) else {
        bail!(DataFailure(format!("no example with id {id}")));
    };
    println!("id:          {}", e.id);
    println!("level:       {} ({})", e.level, e.variant);
    println!("instruction: {}", e.instruction);
    println!("context:     {}", e.context);
    println!("response:    {}", e.response);
    let chars: Vec<char> = e.instruction.chars().collect();
    for m in &e.substitutions.mentions {
        let text: String = chars.get(m.start..m.end).map(|c| c.iter().collect()).unwrap_or_default();
        println!("  {:?}[{}] {}..{} {:?}", m.role, m.slot, m.start, m.end, text);
    }
    for s in &e.substitutions.entities {
        if s.substituted() {
            println!("  {:?} {} -> {}", s.kind, s.name, s.surface);
        }
    }
    println!("prompt:      {}", crate::dataset::frame_prompt(e, true));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            level,
            variant,
            count,
            seed,
            out,
            workers,
            pool,
        } => cmd_generate(level, variant, count, seed, &out, workers, &pool),
        Command::Grade {
            gold,
            pred,
            weights,
            out,
            json,
        } => cmd_grade(&gold, &pred, weights, out.as_deref(), json),
        Command::Stats {
            data,
            freq,
            stopwords,
            rare_rank,
            json,
        } => cmd_stats(&data, freq.as_deref(), stopwords.as_deref(), rare_rank, json),
        Command::Corrupt {
            data,
            feature,
            batches,
            batch_size,
            seed,
            out,
            pool,
        } => cmd_corrupt(&data, feature, batches, batch_size, seed, out.as_deref(), &pool),
        Command::Validate { data } => cmd_validate(&data),
        Command::Inspect { data, id } => cmd_inspect(&data, id),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageFailure>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
