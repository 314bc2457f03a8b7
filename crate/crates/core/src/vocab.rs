//! Name pools, the SQL type catalog and the synonym dictionary.
//!
//! A [`VocabPool`] is loaded from a small line-oriented text format (see
//! `data/vocab.txt` for the shipped default) and is immutable afterwards, so
//! it can be shared freely between generation workers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::instruction::lexicon::Lexicon;
use crate::sql::is_reserved;

pub const DEFAULT_VOCAB: &str = include_str!("../data/vocab.txt");

pub const MIN_TABLES: usize = 50;
pub const MIN_FIELDS: usize = 100;
/// Every table must admit at least this many fields after restrictions.
pub const MIN_CANDIDATES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("field {field:?} is restricted to unknown table {table:?}")]
    DanglingRestriction { field: String, table: String },
    #[error("pool too small: {tables} tables and {fields} fields (need at least {MIN_TABLES} and {MIN_FIELDS})")]
    PoolTooSmall { tables: usize, fields: usize },
    #[error("table {table:?} admits only {available} fields (need at least {MIN_CANDIDATES})")]
    StarvedTable { table: String, available: usize },
    #[error("{0:?} has no synonyms")]
    NoSynonyms(String),
}

fn malformed(line: usize, message: impl Into<String>) -> VocabError {
    VocabError::Malformed {
        line,
        message: message.into(),
    }
}

/// Coarse type family used for aggregate, operator and join compatibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Numeric,
    Text,
    Temporal,
    Boolean,
    Binary,
    Spatial,
}

impl BaseKind {
    pub const ALL: [BaseKind; 6] = [
        BaseKind::Numeric,
        BaseKind::Text,
        BaseKind::Temporal,
        BaseKind::Boolean,
        BaseKind::Binary,
        BaseKind::Spatial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseKind::Numeric => "numeric",
            BaseKind::Text => "text",
            BaseKind::Temporal => "temporal",
            BaseKind::Boolean => "boolean",
            BaseKind::Binary => "binary",
            BaseKind::Spatial => "spatial",
        }
    }
}

impl FromStr for BaseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown base kind {s:?}"))
    }
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeKeyword {
    Integer,
    Int,
    Bigint,
    Smallint,
    Float,
    Decimal,
    Varchar,
    Text,
    Longtext,
    Char,
    Date,
    Datetime,
    Timestamp,
    Time,
    Boolean,
    Blob,
    Point,
    Geometry,
}

impl TypeKeyword {
    pub const ALL: [TypeKeyword; 18] = [
        TypeKeyword::Integer,
        TypeKeyword::Int,
        TypeKeyword::Bigint,
        TypeKeyword::Smallint,
        TypeKeyword::Float,
        TypeKeyword::Decimal,
        TypeKeyword::Varchar,
        TypeKeyword::Text,
        TypeKeyword::Longtext,
        TypeKeyword::Char,
        TypeKeyword::Date,
        TypeKeyword::Datetime,
        TypeKeyword::Timestamp,
        TypeKeyword::Time,
        TypeKeyword::Boolean,
        TypeKeyword::Blob,
        TypeKeyword::Point,
        TypeKeyword::Geometry,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TypeKeyword::Integer => "INTEGER",
            TypeKeyword::Int => "INT",
            TypeKeyword::Bigint => "BIGINT",
            TypeKeyword::Smallint => "SMALLINT",
            TypeKeyword::Float => "FLOAT",
            TypeKeyword::Decimal => "DECIMAL",
            TypeKeyword::Varchar => "VARCHAR",
            TypeKeyword::Text => "TEXT",
            TypeKeyword::Longtext => "LONGTEXT",
            TypeKeyword::Char => "CHAR",
            TypeKeyword::Date => "DATE",
            TypeKeyword::Datetime => "DATETIME",
            TypeKeyword::Timestamp => "TIMESTAMP",
            TypeKeyword::Time => "TIME",
            TypeKeyword::Boolean => "BOOLEAN",
            TypeKeyword::Blob => "BLOB",
            TypeKeyword::Point => "POINT",
            TypeKeyword::Geometry => "GEOMETRY",
        }
    }

    pub fn base_kind(self) -> BaseKind {
        use TypeKeyword::*;
        match self {
            Integer | Int | Bigint | Smallint | Float | Decimal => BaseKind::Numeric,
            Varchar | Text | Longtext | Char => BaseKind::Text,
            Date | Datetime | Timestamp | Time => BaseKind::Temporal,
            Boolean => BaseKind::Boolean,
            Blob => BaseKind::Binary,
            Point | Geometry => BaseKind::Spatial,
        }
    }

    /// Maximum number of parenthesized parameters.
    fn max_params(self) -> usize {
        match self {
            TypeKeyword::Varchar | TypeKeyword::Char => 1,
            TypeKeyword::Decimal => 2,
            _ => 0,
        }
    }

    /// Whether values of this type are whole numbers.
    pub fn is_integral(self) -> bool {
        matches!(
            self,
            TypeKeyword::Integer | TypeKeyword::Int | TypeKeyword::Bigint | TypeKeyword::Smallint
        )
    }
}

/// A column type: catalog keyword plus optional parameters, e.g. `DECIMAL(10,2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SqlType {
    keyword: TypeKeyword,
    params: [u32; 2],
    n_params: u8,
}

impl SqlType {
    pub fn new(keyword: TypeKeyword) -> Self {
        SqlType {
            keyword,
            params: [0; 2],
            n_params: 0,
        }
    }

    pub fn with_params(keyword: TypeKeyword, params: &[u32]) -> Result<Self, String> {
        if params.len() > keyword.max_params() {
            return Err(format!(
                "{} takes at most {} parameter(s)",
                keyword.as_str(),
                keyword.max_params()
            ));
        }
        let mut ty = SqlType::new(keyword);
        for (slot, p) in ty.params.iter_mut().zip(params) {
            if *p == 0 {
                return Err(format!("{} parameters must be positive", keyword.as_str()));
            }
            *slot = *p;
        }
        ty.n_params = params.len() as u8;
        Ok(ty)
    }

    pub fn keyword(&self) -> TypeKeyword {
        self.keyword
    }

    pub fn params(&self) -> &[u32] {
        &self.params[..self.n_params as usize]
    }

    pub fn base_kind(&self) -> BaseKind {
        self.keyword.base_kind()
    }
}

impl fmt::Display for SqlType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword.as_str())?;
        match self.params() {
            [] => Ok(()),
            [a] => write!(f, "({a})"),
            [a, b] => write!(f, "({a},{b})"),
            _ => unreachable!(),
        }
    }
}

impl FromStr for SqlType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, params) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| format!("unclosed parameter list in {s:?}"))?;
                let params = inner
                    .split(',')
                    .map(|p| p.trim().parse::<u32>().map_err(|_| format!("bad type parameter in {s:?}")))
                    .collect::<Result<Vec<_>, _>>()?;
                (s[..open].trim(), params)
            }
            None => (s, Vec::new()),
        };
        let keyword = TypeKeyword::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(head))
            .ok_or_else(|| format!("unknown SQL type {head:?}"))?;
        SqlType::with_params(keyword, &params)
    }
}

impl Serialize for SqlType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SqlType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Anything that carries a canonical name and a list of synonyms.
pub trait Named {
    fn name(&self) -> &str;
    fn synonyms(&self) -> &[String];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableEntry {
    pub name: String,
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldEntry {
    pub name: String,
    pub types: Vec<SqlType>,
    pub synonyms: Vec<String>,
    /// When present, the field only appears in these tables.
    pub tables: Option<BTreeSet<String>>,
}

impl FieldEntry {
    pub fn allowed_in(&self, table: &str) -> bool {
        self.tables.as_ref().is_none_or(|t| t.contains(table))
    }
}

impl Named for TableEntry {
    fn name(&self) -> &str {
        &self.name
    }
    fn synonyms(&self) -> &[String] {
        &self.synonyms
    }
}

impl Named for FieldEntry {
    fn name(&self) -> &str {
        &self.name
    }
    fn synonyms(&self) -> &[String] {
        &self.synonyms
    }
}

/// Picks one synonym uniformly.
pub fn synonym_for<'a, R: Rng + ?Sized>(entry: &'a impl Named, rng: &mut R) -> Result<&'a str, VocabError> {
    entry
        .synonyms()
        .choose(rng)
        .map(String::as_str)
        .ok_or_else(|| VocabError::NoSynonyms(entry.name().to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabPool {
    tables: Vec<TableEntry>,
    fields: Vec<FieldEntry>,
    lexicon: Lexicon,
    table_index: HashMap<String, usize>,
    field_index: HashMap<String, usize>,
    /// Per table (same order as `tables`), indices of admissible fields.
    candidates: Vec<Vec<usize>>,
    vocab_digest: String,
    lexicon_digest: String,
}

/// Loads a vocabulary with the built-in instruction lexicon.
pub fn load_vocab(source: &str) -> Result<VocabPool, VocabError> {
    VocabPool::from_sources(source, crate::instruction::lexicon::DEFAULT_LEXICON)
}

pub(crate) fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl VocabPool {
    /// The shipped vocabulary and lexicon.
    pub fn builtin() -> VocabPool {
        load_vocab(DEFAULT_VOCAB).expect("built-in vocabulary is valid")
    }

    pub fn from_sources(vocab_src: &str, lexicon_src: &str) -> Result<VocabPool, VocabError> {
        let lexicon = Lexicon::parse(lexicon_src)?;
        let (tables, fields) = parse_vocab(vocab_src)?;
        let mut pool = VocabPool {
            tables,
            fields,
            lexicon,
            table_index: HashMap::new(),
            field_index: HashMap::new(),
            candidates: Vec::new(),
            vocab_digest: sha256_hex(vocab_src),
            lexicon_digest: sha256_hex(lexicon_src),
        };
        pool.index()?;
        Ok(pool)
    }

    fn index(&mut self) -> Result<(), VocabError> {
        if self.tables.len() < MIN_TABLES || self.fields.len() < MIN_FIELDS {
            return Err(VocabError::PoolTooSmall {
                tables: self.tables.len(),
                fields: self.fields.len(),
            });
        }
        for (i, t) in self.tables.iter().enumerate() {
            if self.table_index.insert(t.name.clone(), i).is_some() {
                return Err(VocabError::DuplicateName(t.name.clone()));
            }
        }
        for (i, f) in self.fields.iter().enumerate() {
            if self.field_index.insert(f.name.clone(), i).is_some() {
                return Err(VocabError::DuplicateName(f.name.clone()));
            }
            for table in f.tables.iter().flatten() {
                if !self.table_index.contains_key(table) {
                    return Err(VocabError::DanglingRestriction {
                        field: f.name.clone(),
                        table: table.clone(),
                    });
                }
            }
        }
        self.candidates = self
            .tables
            .iter()
            .map(|t| {
                (0..self.fields.len())
                    .filter(|&i| self.fields[i].allowed_in(&t.name))
                    .collect::<Vec<_>>()
            })
            .collect();
        for (t, c) in self.tables.iter().zip(&self.candidates) {
            if c.len() < MIN_CANDIDATES {
                return Err(VocabError::StarvedTable {
                    table: t.name.clone(),
                    available: c.len(),
                });
            }
        }
        Ok(())
    }

    pub fn tables(&self) -> &[TableEntry] {
        &self.tables
    }

    pub fn fields(&self) -> &[FieldEntry] {
        &self.fields
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn table(&self, name: &str) -> Option<&TableEntry> {
        self.table_index.get(name).map(|&i| &self.tables[i])
    }

    pub fn field(&self, name: &str) -> Option<&FieldEntry> {
        self.field_index.get(name).map(|&i| &self.fields[i])
    }

    /// Fields that may appear in `table`, in pool order.
    pub fn candidates_for(&self, table: &str) -> impl Iterator<Item = &FieldEntry> + '_ {
        let idx = self.table_index.get(table).copied();
        idx.into_iter()
            .flat_map(move |i| self.candidates[i].iter().map(move |&f| &self.fields[f]))
    }

    pub(crate) fn candidate_indices(&self, table_idx: usize) -> &[usize] {
        &self.candidates[table_idx]
    }

    pub fn vocab_digest(&self) -> &str {
        &self.vocab_digest
    }

    pub fn lexicon_digest(&self) -> &str {
        &self.lexicon_digest
    }
}

fn split_list(column: Option<&str>) -> Vec<String> {
    column
        .map(|c| {
            c.split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

fn check_identifier(line: usize, name: &str) -> Result<(), VocabError> {
    let mut chars = name.chars();
    let head_ok = chars.next().is_some_and(|c| c.is_ascii_lowercase() || c == '_');
    if !head_ok || !chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
        return Err(malformed(line, format!("{name:?} is not a snake_case identifier")));
    }
    if is_reserved(name) {
        return Err(malformed(line, format!("{name:?} is a reserved SQL keyword")));
    }
    Ok(())
}

fn check_synonyms(line: usize, name: &str, synonyms: &[String]) -> Result<(), VocabError> {
    let mut seen = HashSet::new();
    for s in synonyms {
        if s == name {
            return Err(malformed(line, format!("synonym {s:?} equals the canonical name")));
        }
        if !seen.insert(s.as_str()) {
            return Err(malformed(line, format!("synonym {s:?} listed twice")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Tables,
    Fields,
}

fn parse_vocab(src: &str) -> Result<(Vec<TableEntry>, Vec<FieldEntry>), VocabError> {
    let mut section = Section::None;
    let mut tables = Vec::new();
    let mut fields = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[tables]" => Section::Tables,
                "[fields]" => Section::Fields,
                other => return Err(malformed(line_no, format!("unknown section {other}"))),
            };
            continue;
        }
        let cols: Vec<&str> = line.split('|').map(str::trim).collect();
        match section {
            Section::None => return Err(malformed(line_no, "entry outside of a section")),
            Section::Tables => {
                if cols.len() > 2 {
                    return Err(malformed(line_no, "table entries have at most 2 columns"));
                }
                let name = cols[0].to_string();
                check_identifier(line_no, &name)?;
                let synonyms = split_list(cols.get(1).copied());
                check_synonyms(line_no, &name, &synonyms)?;
                tables.push(TableEntry { name, synonyms });
            }
            Section::Fields => {
                if cols.len() < 2 || cols.len() > 4 {
                    return Err(malformed(line_no, "field entries have 2 to 4 columns"));
                }
                let name = cols[0].to_string();
                check_identifier(line_no, &name)?;
                let types = split_list(Some(cols[1]))
                    .iter()
                    .map(|t| t.parse::<SqlType>().map_err(|e| malformed(line_no, e)))
                    .collect::<Result<Vec<_>, _>>()?;
                if types.is_empty() {
                    return Err(malformed(line_no, format!("field {name:?} lists no types")));
                }
                let synonyms = split_list(cols.get(2).copied());
                check_synonyms(line_no, &name, &synonyms)?;
                let restrictions = split_list(cols.get(3).copied());
                let tables = (!restrictions.is_empty()).then(|| restrictions.into_iter().collect());
                fields.push(FieldEntry {
                    name,
                    types,
                    synonyms,
                    tables,
                });
            }
        }
    }
    Ok((tables, fields))
}
