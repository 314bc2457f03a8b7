//! Instruction templates, aggregate phrases and ordering phrases.
//!
//! The lexicon is data: `data/lexicon.txt` documents the format. Parsing
//! checks everything the renderer relies on, so rendering itself never fails.

use std::collections::BTreeSet;
use std::fmt;

use crate::sql::Aggregate;
use crate::vocab::{BaseKind, VocabError};

pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

/// Minimum number of phrases per aggregate kind.
pub const MIN_PHRASES_PER_AGGREGATE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateForm {
    Command,
    Question,
    Complex,
}

impl TemplateForm {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "command" => Some(TemplateForm::Command),
            "question" => Some(TemplateForm::Question),
            "complex" => Some(TemplateForm::Complex),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Fields,
    Table,
    JoinSuffix,
    WhereSuffix,
    OrderSuffix,
}

impl Slot {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "FIELDS" => Some(Slot::Fields),
            "TABLE" => Some(Slot::Table),
            "JOIN_SUFFIX" => Some(Slot::JoinSuffix),
            "WHERE_SUFFIX" => Some(Slot::WhereSuffix),
            "ORDER_SUFFIX" => Some(Slot::OrderSuffix),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Text(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub form: TemplateForm,
    pub pattern: String,
    /// The pattern split into literal text and slots, with any missing
    /// suffix slots appended.
    pub pieces: Vec<Piece>,
}

/// An aggregate phrase of the form `<function text> {f}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatePhrase {
    pub kind: Aggregate,
    prefix: String,
}

impl AggregatePhrase {
    /// The words naming the function, e.g. `total count`.
    pub fn function_text(&self) -> &str {
        self.prefix.trim_end()
    }

    /// Text placed before the field surface, including the separating space.
    pub fn prefix(&self) -> &str {
        &self.prefix
    }
}

impl fmt::Display for AggregatePhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{f}}", self.prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AggregatePhrases {
    phrases: Vec<AggregatePhrase>,
}

impl AggregatePhrases {
    pub fn all(&self) -> impl Iterator<Item = (Aggregate, &AggregatePhrase)> + '_ {
        self.phrases.iter().map(|p| (p.kind, p))
    }

    pub fn for_kind(&self, kind: Aggregate) -> impl Iterator<Item = &AggregatePhrase> + '_ {
        self.phrases.iter().filter(move |p| p.kind == kind)
    }
}

/// One side of an ordering phrase pair.
///
/// The rendered phrase is `before + field + after`; `direction` is the
/// char range (within the rendered phrase, counted as if the field were
/// empty and then shifted) of the words that differ from the opposite side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionPattern {
    pub before: String,
    pub after: String,
    /// Words that distinguish this side from its opposite.
    pub direction_words: String,
    /// Whether the direction words come before the field.
    pub direction_before_field: bool,
    /// Char offset of the direction words within `before` or `after`.
    pub direction_offset: usize,
}

impl DirectionPattern {
    pub fn render(&self, field: &str) -> String {
        format!("{}{}{}", self.before, field, self.after)
    }

    /// Char range of the direction words in `render(field)`.
    pub fn direction_range(&self, field: &str) -> (usize, usize) {
        let len = self.direction_words.chars().count();
        let start = if self.direction_before_field {
            self.direction_offset
        } else {
            self.before.chars().count() + field.chars().count() + self.direction_offset
        };
        (start, start + len)
    }

    /// Char range of the field in `render(field)`.
    pub fn field_range(&self, field: &str) -> (usize, usize) {
        let start = self.before.chars().count();
        (start, start + field.chars().count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderPhrase {
    /// `None` means the phrase suits any column type.
    pub kinds: Option<BTreeSet<BaseKind>>,
    pub asc: DirectionPattern,
    pub desc: DirectionPattern,
}

impl OrderPhrase {
    pub fn applies_to(&self, kind: BaseKind) -> bool {
        self.kinds.as_ref().is_none_or(|k| k.contains(&kind))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    templates: Vec<Template>,
    aggregates: AggregatePhrases,
    ordering: Vec<OrderPhrase>,
}

impl Lexicon {
    pub fn builtin() -> Lexicon {
        Lexicon::parse(DEFAULT_LEXICON).expect("built-in lexicon is valid")
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn aggregate_phrases(&self) -> &AggregatePhrases {
        &self.aggregates
    }

    pub fn order_phrases(&self) -> &[OrderPhrase] {
        &self.ordering
    }

    pub fn parse(src: &str) -> Result<Lexicon, VocabError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Templates,
            Aggregates,
            Ordering,
        }
        let mut section = Section::None;
        let mut lex = Lexicon {
            templates: Vec::new(),
            aggregates: AggregatePhrases::default(),
            ordering: Vec::new(),
        };
        let mut ids = BTreeSet::new();
        for (i, raw) in src.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[templates]" => Section::Templates,
                    "[aggregates]" => Section::Aggregates,
                    "[ordering]" => Section::Ordering,
                    other => return Err(malformed(line_no, format!("unknown section {other}"))),
                };
                continue;
            }
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            match section {
                Section::None => return Err(malformed(line_no, "entry outside of a section")),
                Section::Templates => {
                    let [id, form, pattern] = cols[..] else {
                        return Err(malformed(line_no, "template entries have 3 columns"));
                    };
                    let form = TemplateForm::parse(form)
                        .ok_or_else(|| malformed(line_no, format!("unknown template form {form:?}")))?;
                    if !ids.insert(id.to_string()) {
                        return Err(malformed(line_no, format!("duplicate template id {id:?}")));
                    }
                    let pieces = parse_pattern(pattern).map_err(|m| malformed(line_no, m))?;
                    lex.templates.push(Template {
                        id: id.to_string(),
                        form,
                        pattern: pattern.to_string(),
                        pieces,
                    });
                }
                Section::Aggregates => {
                    let [kind, phrase] = cols[..] else {
                        return Err(malformed(line_no, "aggregate entries have 2 columns"));
                    };
                    let kind: Aggregate = kind.parse().map_err(|e: String| malformed(line_no, e))?;
                    let prefix = phrase
                        .strip_suffix("{f}")
                        .filter(|p| p.ends_with(' ') && !p.trim().is_empty() && !p.contains("{f}"))
                        .ok_or_else(|| malformed(line_no, "aggregate phrase must be '<words> {f}'"))?;
                    if lex.aggregates.all().any(|(_, p)| p.prefix == prefix) {
                        return Err(malformed(line_no, format!("duplicate aggregate phrase {phrase:?}")));
                    }
                    lex.aggregates.phrases.push(AggregatePhrase {
                        kind,
                        prefix: prefix.to_string(),
                    });
                }
                Section::Ordering => {
                    let [kinds, asc, desc] = cols[..] else {
                        return Err(malformed(line_no, "ordering entries have 3 columns"));
                    };
                    let kinds = if kinds == "any" {
                        None
                    } else {
                        let set = kinds
                            .split(';')
                            .map(|k| k.trim().parse::<BaseKind>())
                            .collect::<Result<BTreeSet<_>, _>>()
                            .map_err(|e| malformed(line_no, e))?;
                        Some(set)
                    };
                    let (asc, desc) = split_direction(asc, desc).map_err(|m| malformed(line_no, m))?;
                    lex.ordering.push(OrderPhrase { kinds, asc, desc });
                }
            }
        }
        lex.check()?;
        Ok(lex)
    }

    fn check(&self) -> Result<(), VocabError> {
        let whole = |message: String| malformed(0, message);
        if self.templates.is_empty() {
            return Err(whole("lexicon has no templates".into()));
        }
        for kind in Aggregate::ALL {
            let n = self.aggregates.for_kind(kind).count();
            if n < MIN_PHRASES_PER_AGGREGATE {
                return Err(whole(format!(
                    "aggregate {kind} has {n} phrases (need {MIN_PHRASES_PER_AGGREGATE})"
                )));
            }
        }
        for kind in BaseKind::ALL {
            if !self.ordering.iter().any(|o| o.applies_to(kind)) {
                return Err(whole(format!("no ordering phrase applies to {kind} columns")));
            }
        }
        let asc: BTreeSet<String> = self.ordering.iter().map(|o| o.asc.render("{f}")).collect();
        if let Some(clash) = self.ordering.iter().find(|o| asc.contains(&o.desc.render("{f}"))) {
            return Err(whole(format!(
                "ordering phrase {:?} is used for both directions",
                clash.desc.render("{f}")
            )));
        }
        Ok(())
    }
}

fn malformed(line: usize, message: impl Into<String>) -> VocabError {
    VocabError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_pattern(pattern: &str) -> Result<Vec<Piece>, String> {
    let mut pieces = Vec::new();
    let mut rest = pattern;
    let mut seen = Vec::new();
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Text(rest[..open].to_string()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| format!("unclosed slot in {pattern:?}"))?
            + open;
        let name = &rest[open + 1..close];
        let slot = Slot::parse(name).ok_or_else(|| format!("unknown slot {{{name}}}"))?;
        if seen.contains(&slot) {
            return Err(format!("slot {{{name}}} appears twice"));
        }
        seen.push(slot);
        pieces.push(Piece::Slot(slot));
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err(format!("stray '}}' in {pattern:?}"));
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    for required in [Slot::Fields, Slot::Table] {
        if !seen.contains(&required) {
            return Err(format!("pattern lacks {required:?} slot"));
        }
    }
    for suffix in [Slot::JoinSuffix, Slot::WhereSuffix, Slot::OrderSuffix] {
        if !seen.contains(&suffix) {
            pieces.push(Piece::Slot(suffix));
        }
    }
    Ok(pieces)
}

/// Splits an ascending/descending pattern pair into the shared words and the
/// differing direction words. `{f}` must sit in the shared part.
fn split_direction(asc: &str, desc: &str) -> Result<(DirectionPattern, DirectionPattern), String> {
    for p in [asc, desc] {
        if p.matches("{f}").count() != 1 {
            return Err(format!("ordering phrase {p:?} must contain {{f}} exactly once"));
        }
    }
    let a: Vec<&str> = asc.split(' ').collect();
    let d: Vec<&str> = desc.split(' ').collect();
    let prefix = a.iter().zip(&d).take_while(|(x, y)| x == y).count();
    let max_suffix = a.len().min(d.len()) - prefix;
    let suffix = a
        .iter()
        .rev()
        .zip(d.iter().rev())
        .take(max_suffix)
        .take_while(|(x, y)| x == y)
        .count();
    if prefix + suffix == a.len() || prefix + suffix == d.len() {
        return Err(format!("ordering phrases {asc:?} and {desc:?} do not differ by whole words"));
    }
    let build = |words: &[&str]| -> Result<DirectionPattern, String> {
        let f_pos = words.iter().position(|w| w.contains("{f}")).unwrap();
        if words[f_pos] != "{f}" {
            return Err("{f} must be a whole word".to_string());
        }
        let mid_start = prefix;
        let mid_end = words.len() - suffix;
        if (mid_start..mid_end).contains(&f_pos) {
            return Err("{f} must not lie in the direction words".to_string());
        }
        let joined = |ws: &[&str]| ws.join(" ");
        let before = joined(&words[..f_pos]);
        let before = if f_pos > 0 { before + " " } else { before };
        let after = joined(&words[f_pos + 1..]);
        let after = if f_pos + 1 < words.len() { format!(" {after}") } else { after };
        let direction_words = joined(&words[mid_start..mid_end]);
        // Char offset of the direction words relative to the start of the
        // segment (before or after the field) containing them.
        let offset_words = |from: usize, to: usize| -> usize {
            words[from..to].iter().map(|w| w.chars().count() + 1).sum()
        };
        let (direction_before_field, direction_offset) = if mid_end <= f_pos {
            (true, offset_words(0, mid_start))
        } else {
            (false, 1 + offset_words(f_pos + 1, mid_start))
        };
        Ok(DirectionPattern {
            before,
            after,
            direction_words,
            direction_before_field,
            direction_offset,
        })
    };
    Ok((build(&a)?, build(&d)?))
}
