//! Corpus difficulty metrics and structural statistics.
//!
//! Words are whitespace tokens with non-alphanumeric characters trimmed from
//! both ends, lowercased. Content words are words outside the stopword list;
//! a content word is rare when it is absent from the frequency list or ranks
//! beyond the rare threshold.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Example;
use crate::sql::{parse_create_tables, parse_sql};

pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
pub const DEFAULT_WORD_FREQ: &str = include_str!("../data/word_freq_en.txt");
pub const DEFAULT_RARE_RANK: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("text has no words")]
    EmptyText,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("example {id}: {message}")]
    BadExample { id: u64, message: String },
}

fn word_list(src: &str) -> impl Iterator<Item = String> + '_ {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
}

/// Splits text into normalized words.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Sentences end at `.`, `!` or `?` followed by whitespace or end of text.
pub fn sentence_count(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let n = chars
        .iter()
        .enumerate()
        .filter(|(i, c)| matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()))
        .count();
    n.max(1)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn part_syllables(part: &str) -> usize {
    let chars: Vec<char> = part.chars().filter(|c| c.is_alphabetic()).collect();
    if chars.is_empty() {
        return 1;
    }
    let mut count = 0;
    let mut prev_vowel = false;
    for (i, &c) in chars.iter().enumerate() {
        // A leading y is a consonant ("yes", "year").
        let v = is_vowel(c) && !(c == 'y' && i == 0);
        if v && !prev_vowel {
            count += 1;
        }
        prev_vowel = v;
    }
    let n = chars.len();
    if count > 1 && chars[n - 1] == 'e' {
        let le = n >= 3 && chars[n - 2] == 'l' && !is_vowel(chars[n - 3]);
        let ee = chars[n - 2] == 'e';
        if !le && !ee {
            count -= 1;
        }
    }
    count.max(1)
}

/// Vowel-group syllable estimate; snake_case words count per part.
pub fn syllables(word: &str) -> usize {
    let lower = word.to_lowercase();
    let parts: Vec<&str> = lower.split('_').filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        return 1;
    }
    parts.iter().map(|p| part_syllables(p)).sum()
}

/// Flesch reading ease from raw counts.
pub fn flesch_formula(words: usize, sentences: usize, syllables: usize) -> f64 {
    206.835 - 1.015 * (words as f64 / sentences as f64) - 84.6 * (syllables as f64 / words as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextAnalyzer {
    stopwords: HashSet<String>,
    ranks: HashMap<String, usize>,
    rare_rank: usize,
}

impl TextAnalyzer {
    pub fn builtin() -> TextAnalyzer {
        TextAnalyzer::new(DEFAULT_STOPWORDS, DEFAULT_WORD_FREQ, DEFAULT_RARE_RANK)
    }

    /// `freq` lists one word per line, most frequent first; the rank of a
    /// word is its 1-based line number among entries.
    pub fn new(stopwords: &str, freq: &str, rare_rank: usize) -> TextAnalyzer {
        let mut ranks = HashMap::new();
        for (i, w) in word_list(freq).enumerate() {
            ranks.entry(w).or_insert(i + 1);
        }
        TextAnalyzer {
            stopwords: word_list(stopwords).collect(),
            ranks,
            rare_rank,
        }
    }

    pub fn with_rare_rank(mut self, rare_rank: usize) -> TextAnalyzer {
        self.rare_rank = rare_rank;
        self
    }

    pub fn stopword_count(&self) -> usize {
        self.stopwords.len()
    }

    pub fn is_content(&self, word: &str) -> bool {
        !self.stopwords.contains(word)
    }

    pub fn is_rare(&self, word: &str) -> bool {
        self.ranks.get(word).is_none_or(|&r| r > self.rare_rank)
    }

    /// Rare content words over content words; 0 without content words.
    pub fn rarity(&self, text: &str) -> f64 {
        let content: Vec<String> = words(text).into_iter().filter(|w| self.is_content(w)).collect();
        if content.is_empty() {
            return 0.0;
        }
        content.iter().filter(|w| self.is_rare(w)).count() as f64 / content.len() as f64
    }

    /// Content words over all words; 0 for empty text.
    pub fn lexical_density(&self, text: &str) -> f64 {
        let ws = words(text);
        if ws.is_empty() {
            return 0.0;
        }
        ws.iter().filter(|w| self.is_content(w)).count() as f64 / ws.len() as f64
    }

    pub fn flesch(&self, text: &str) -> Result<f64, StatsError> {
        let ws = words(text);
        if ws.is_empty() {
            return Err(StatsError::EmptyText);
        }
        let syl: usize = ws.iter().map(|w| syllables(w)).sum();
        Ok(flesch_formula(ws.len(), sentence_count(text), syl))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub examples: usize,
    pub rarity: f64,
    pub lexical_density: f64,
    pub readability: f64,
    pub mean_instruction_words: f64,
    pub order_by_rate: f64,
    pub where_rate: f64,
    pub join_rate: f64,
    /// Fraction of queries with at least one aggregate.
    pub aggregate_rate: f64,
    /// Main-table column count to number of examples.
    pub column_histogram: BTreeMap<usize, usize>,
}

/// Aggregates metrics over instructions and clause rates over gold queries.
pub fn corpus_stats(examples: &[Example], analyzer: &TextAnalyzer) -> Result<CorpusStats, StatsError> {
    if examples.is_empty() {
        return Err(StatsError::EmptyDataset);
    }
    let n = examples.len() as f64;
    let mut s = CorpusStats {
        examples: examples.len(),
        rarity: 0.0,
        lexical_density: 0.0,
        readability: 0.0,
        mean_instruction_words: 0.0,
        order_by_rate: 0.0,
        where_rate: 0.0,
        join_rate: 0.0,
        aggregate_rate: 0.0,
        column_histogram: BTreeMap::new(),
    };
    for ex in examples {
        let bad = |message: String| StatsError::BadExample { id: ex.id, message };
        s.rarity += analyzer.rarity(&ex.instruction);
        s.lexical_density += analyzer.lexical_density(&ex.instruction);
        s.readability += analyzer.flesch(&ex.instruction).map_err(|e| bad(e.to_string()))?;
        s.mean_instruction_words += words(&ex.instruction).len() as f64;
        let q = parse_sql(&ex.response).map_err(|e| bad(e.to_string()))?;
        s.order_by_rate += !q.order_by.is_empty() as u8 as f64;
        s.where_rate += !q.filters.is_empty() as u8 as f64;
        s.join_rate += q.join.is_some() as u8 as f64;
        s.aggregate_rate += q.has_aggregates() as u8 as f64;
        let tables = parse_create_tables(&ex.context).map_err(|e| bad(e.to_string()))?;
        *s.column_histogram.entry(tables[0].columns.len()).or_default() += 1;
    }
    for v in [
        &mut s.rarity,
        &mut s.lexical_density,
        &mut s.readability,
        &mut s.mean_instruction_words,
        &mut s.order_by_rate,
        &mut s.where_rate,
        &mut s.join_rate,
        &mut s.aggregate_rate,
    ] {
        *v /= n;
    }
    Ok(s)
}

/// Aligned text table with one row per dataset.
pub fn render_table(rows: &[(String, CorpusStats)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Dataset".len());
    let mut out = String::new();
    writeln!(out, "{:<name_w$}  {:>7}  {:>15}  {:>11}", "Dataset", "Rarity", "Lexical Density", "Readability").unwrap();
    for (name, s) in rows {
        writeln!(
            out,
            "{:<name_w$}  {:>7.2}  {:>15.2}  {:>11.1}",
            name, s.rarity, s.lexical_density, s.readability
        )
        .unwrap();
    }
    out
}
