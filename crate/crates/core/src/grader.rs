//! Exact-match and partial-credit grading of predicted SQL.
//!
//! Three component scores, each in `[0, 1]`:
//!
//! * structural: 1 when the prediction parses; otherwise the longest common
//!   subsequence of the clause keywords the gold query needs and the clause
//!   keywords found in the prediction, over the number needed.
//! * semantic: mean of the table match and the Dice overlap of the select
//!   field multisets (aggregates stripped).
//! * implementation: mean of the checks that apply (aggregates, ordering,
//!   filters, join); 1 when none applies.
//!
//! The total is their weighted sum.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::level::Level;
use crate::sql::{parse_sql, render_sql, SqlQuery, WhereFilter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub structural: f64,
    pub semantic: f64,
    pub implementation: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            structural: 1.0 / 3.0,
            semantic: 1.0 / 3.0,
            implementation: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradeError {
    #[error("weights must be three non-negative numbers summing to 1, got {0}")]
    BadWeights(String),
    #[error("prediction for unknown id {0}")]
    UnknownId(u64),
    #[error("more than one prediction for id {0}")]
    DuplicateId(u64),
    #[error("gold set lists id {0} twice")]
    DuplicateGoldId(u64),
}

impl Weights {
    pub fn new(structural: f64, semantic: f64, implementation: f64) -> Result<Weights, GradeError> {
        let w = [structural, semantic, implementation];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(GradeError::BadWeights(format!("{structural},{semantic},{implementation}")));
        }
        Ok(Weights {
            structural,
            semantic,
            implementation,
        })
    }
}

impl FromStr for Weights {
    type Err = GradeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GradeError::BadWeights(s.to_string());
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match parts[..] {
            [a, b, c] => Weights::new(a, b, c),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeReport {
    pub exact_match: bool,
    pub structural: f64,
    pub semantic: f64,
    pub implementation: f64,
    pub total: f64,
    pub diagnostics: Vec<String>,
}

/// Clause keywords in the order a query uses them.
fn expected_keywords(gold: &SqlQuery) -> Vec<&'static str> {
    let mut kws = vec!["SELECT", "FROM"];
    if gold.join.is_some() {
        kws.push("JOIN");
    }
    if !gold.filters.is_empty() {
        kws.push("WHERE");
    }
    if !gold.order_by.is_empty() {
        kws.push("ORDER BY");
    }
    kws
}

fn found_keywords(text: &str) -> Vec<&'static str> {
    let words: Vec<String> = text
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_uppercase())
        .collect();
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        match w.as_str() {
            "SELECT" => out.push("SELECT"),
            "FROM" => out.push("FROM"),
            "JOIN" => out.push("JOIN"),
            "WHERE" => out.push("WHERE"),
            "ORDER" if words.get(i + 1).is_some_and(|n| n == "BY") => out.push("ORDER BY"),
            _ => {}
        }
    }
    out
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Dice coefficient of two multisets; 1 when both are empty.
pub fn dice_multiset<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for x in a {
        *counts.entry(x).or_default() += 1;
    }
    let mut common = 0;
    for y in b {
        if let Some(c) = counts.get_mut(y) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

fn dice_set<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> f64 {
    let a: HashSet<&T> = a.iter().collect();
    let b: HashSet<&T> = b.iter().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * a.intersection(&b).count() as f64 / (a.len() + b.len()) as f64
}

fn semantic_score(pred: &SqlQuery, gold: &SqlQuery, notes: &mut Vec<String>) -> f64 {
    let table = (pred.table == gold.table) as u8 as f64;
    if table < 1.0 {
        notes.push(format!("table: expected {}, found {}", gold.table, pred.table));
    }
    let pf: Vec<&str> = pred.select.iter().map(|s| s.field.as_str()).collect();
    let gf: Vec<&str> = gold.select.iter().map(|s| s.field.as_str()).collect();
    let fields = dice_multiset(&pf, &gf);
    if fields < 1.0 {
        notes.push(format!("select fields overlap {fields:.3}"));
    }
    (table + fields) / 2.0
}

fn aggregate_score(pred: &SqlQuery, gold: &SqlQuery, notes: &mut Vec<String>) -> f64 {
    let mut used = vec![false; pred.select.len()];
    let (mut matched, mut agree) = (0usize, 0usize);
    for g in &gold.select {
        let hit = pred
            .select
            .iter()
            .enumerate()
            .find(|(i, p)| !used[*i] && p.field == g.field);
        if let Some((i, p)) = hit {
            used[i] = true;
            matched += 1;
            if p.aggregate == g.aggregate {
                agree += 1;
            } else {
                notes.push(format!("aggregate on {}: expected {:?}, found {:?}", g.field, g.aggregate, p.aggregate));
            }
        }
    }
    if matched == 0 {
        0.0
    } else {
        agree as f64 / matched as f64
    }
}

fn order_score(pred: &SqlQuery, gold: &SqlQuery, notes: &mut Vec<String>) -> f64 {
    let n = pred.order_by.len().max(gold.order_by.len());
    let mut sum = 0.0;
    for i in 0..n {
        match (pred.order_by.get(i), gold.order_by.get(i)) {
            (Some(p), Some(g)) => {
                let s = 0.5 * (p.field == g.field) as u8 as f64 + 0.5 * (p.direction == g.direction) as u8 as f64;
                if s < 1.0 {
                    notes.push(format!(
                        "order key {i}: expected {} {}, found {} {}",
                        g.field,
                        g.direction.as_str(),
                        p.field,
                        p.direction.as_str()
                    ));
                }
                sum += s;
            }
            _ => notes.push(format!("order key {i} missing on one side")),
        }
    }
    sum / n as f64
}

fn filter_score(pred: &SqlQuery, gold: &SqlQuery, notes: &mut Vec<String>) -> f64 {
    let s = dice_set::<WhereFilter>(&pred.filters, &gold.filters);
    if s < 1.0 {
        notes.push(format!("filters overlap {s:.3}"));
    }
    s
}

fn join_score(pred: &SqlQuery, gold: &SqlQuery, notes: &mut Vec<String>) -> f64 {
    match (&pred.join, &gold.join) {
        (Some(p), Some(g)) => {
            let parts = [
                p.right_table == g.right_table,
                p.left_key == g.left_key,
                p.right_key == g.right_key,
            ];
            let s = parts.iter().filter(|x| **x).count() as f64 / 3.0;
            if s < 1.0 {
                notes.push("join differs".into());
            }
            s
        }
        (None, None) => 1.0,
        _ => {
            notes.push("join present on one side only".into());
            0.0
        }
    }
}

fn implementation_score(pred: &SqlQuery, gold: &SqlQuery, notes: &mut Vec<String>) -> f64 {
    let mut scores = Vec::new();
    if pred.has_aggregates() || gold.has_aggregates() {
        scores.push(aggregate_score(pred, gold, notes));
    }
    if !pred.order_by.is_empty() || !gold.order_by.is_empty() {
        scores.push(order_score(pred, gold, notes));
    }
    if !pred.filters.is_empty() || !gold.filters.is_empty() {
        scores.push(filter_score(pred, gold, notes));
    }
    if pred.join.is_some() || gold.join.is_some() {
        scores.push(join_score(pred, gold, notes));
    }
    if scores.is_empty() {
        1.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Grades with equal weights.
pub fn grade(prediction: &str, gold: &SqlQuery) -> GradeReport {
    grade_with(prediction, gold, &Weights::default())
}

pub fn grade_with(prediction: &str, gold: &SqlQuery, weights: &Weights) -> GradeReport {
    let mut diagnostics = Vec::new();
    let (exact_match, structural, semantic, implementation) = match parse_sql(prediction) {
        Ok(pred) => {
            let exact = render_sql(&pred) == render_sql(gold);
            let semantic = semantic_score(&pred, gold, &mut diagnostics);
            let implementation = implementation_score(&pred, gold, &mut diagnostics);
            (exact, 1.0, semantic, implementation)
        }
        Err(e) => {
            diagnostics.push(format!("unparseable: {e}"));
            let expected = expected_keywords(gold);
            let found = found_keywords(prediction);
            let structural = lcs_len(&expected, &found) as f64 / expected.len() as f64;
            (false, structural, 0.0, 0.0)
        }
    };
    let total = if exact_match {
        1.0
    } else {
        (weights.structural * structural + weights.semantic * semantic + weights.implementation * implementation)
            .clamp(0.0, 1.0)
    };
    GradeReport {
        exact_match,
        structural,
        semantic,
        implementation,
        total,
        diagnostics,
    }
}

/// One gold query with its identity and level.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldRecord {
    pub id: u64,
    pub level: Level,
    pub query: SqlQuery,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub count: usize,
    pub exact_match_accuracy: f64,
    pub mean_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    /// Gold ids without a prediction; they are graded as empty predictions.
    pub missing: usize,
    pub exact_match_accuracy: f64,
    pub mean_total: f64,
    pub mean_structural: f64,
    pub mean_semantic: f64,
    pub mean_implementation: f64,
    pub per_level: BTreeMap<Level, LevelSummary>,
    /// Per-example reports in gold order.
    pub reports: Vec<(u64, GradeReport)>,
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "examples:        {}", self.count)?;
        writeln!(f, "missing:         {}", self.missing)?;
        writeln!(f, "exact match:     {:.4}", self.exact_match_accuracy)?;
        writeln!(f, "mean total:      {:.4}", self.mean_total)?;
        writeln!(f, "  structural:    {:.4}", self.mean_structural)?;
        writeln!(f, "  semantic:      {:.4}", self.mean_semantic)?;
        writeln!(f, "  implementation:{:.4}", self.mean_implementation)?;
        for (level, s) in &self.per_level {
            writeln!(
                f,
                "{level}: n={} exact={:.4} total={:.4}",
                s.count, s.exact_match_accuracy, s.mean_total
            )?;
        }
        Ok(())
    }
}

/// Grades a batch of `(id, prediction)` pairs against the gold set.
pub fn grade_batch(
    predictions: &[(u64, String)],
    gold: &[GoldRecord],
    weights: &Weights,
) -> Result<BatchSummary, GradeError> {
    let mut gold_ids = HashSet::new();
    for g in gold {
        if !gold_ids.insert(g.id) {
            return Err(GradeError::DuplicateGoldId(g.id));
        }
    }
    let mut by_id: HashMap<u64, &str> = HashMap::new();
    for (id, text) in predictions {
        if !gold_ids.contains(id) {
            return Err(GradeError::UnknownId(*id));
        }
        if by_id.insert(*id, text).is_some() {
            return Err(GradeError::DuplicateId(*id));
        }
    }
    let reports: Vec<(u64, GradeReport)> = gold
        .par_iter()
        .map(|g| (g.id, grade_with(by_id.get(&g.id).copied().unwrap_or(""), &g.query, weights)))
        .collect();

    let n = gold.len().max(1) as f64;
    let mean = |f: &dyn Fn(&GradeReport) -> f64| reports.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
    let mut per_level: BTreeMap<Level, LevelSummary> = BTreeMap::new();
    for (g, (_, r)) in gold.iter().zip(&reports) {
        let s = per_level.entry(g.level).or_default();
        s.count += 1;
        s.exact_match_accuracy += r.exact_match as u8 as f64;
        s.mean_total += r.total;
    }
    for s in per_level.values_mut() {
        s.exact_match_accuracy /= s.count as f64;
        s.mean_total /= s.count as f64;
    }
    Ok(BatchSummary {
        count: gold.len(),
        missing: gold.len() - by_id.len(),
        exact_match_accuracy: mean(&|r| r.exact_match as u8 as f64),
        mean_total: mean(&|r| r.total),
        mean_structural: mean(&|r| r.structural),
        mean_semantic: mean(&|r| r.semantic),
        mean_implementation: mean(&|r| r.implementation),
        per_level,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::{Aggregate, Direction};

    fn q(s: &str) -> SqlQuery {
        parse_sql(s).unwrap()
    }

    #[test]
    fn identity_is_exact() {
        let gold = q("SELECT COUNT(a) AS COUNT_a, b FROM t JOIN u ON t.a = u.c WHERE b > 3 ORDER BY b DESC");
        let r = grade(&render_sql(&gold), &gold);
        assert!(r.exact_match);
        assert_eq!(r.total, 1.0);
        assert!(r.diagnostics.is_empty());
    }

    #[test]
    fn wrong_table_scores_five_sixths() {
        let gold = q("SELECT type, date FROM orders");
        let r = grade("SELECT type, date FROM products", &gold);
        assert!(!r.exact_match);
        assert_eq!(r.structural, 1.0);
        assert_eq!(r.semantic, 0.5);
        assert_eq!(r.implementation, 1.0);
        assert!((r.total - 2.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn garbage_scores_zero() {
        let gold = q("SELECT type FROM orders");
        let r = grade("banana banana", &gold);
        assert_eq!((r.structural, r.semantic, r.implementation, r.total), (0.0, 0.0, 0.0, 0.0));
        assert!(!r.exact_match);
    }

    #[test]
    fn salvage_counts_keywords_in_order() {
        let gold = q("SELECT a FROM t WHERE a = 1 ORDER BY a ASC");
        // SELECT, FROM and ORDER BY present in order; WHERE missing.
        let r = grade("select a from t order by", &gold);
        assert_eq!(r.structural, 0.75);
        let r = grade("FROM t SELECT a", &gold);
        assert_eq!(r.structural, 0.25);
    }

    #[test]
    fn keyword_case_and_spacing_do_not_matter() {
        let gold = q("SELECT a FROM t ORDER BY a DESC");
        assert!(grade("select   a from t order by a desc", &gold).exact_match);
        assert!(!grade("SELECT A FROM t ORDER BY A DESC", &gold).exact_match);
    }

    #[test]
    fn permutation_keeps_semantic_full() {
        let gold = q("SELECT a, b, c FROM t");
        let r = grade("SELECT c, a, b FROM t", &gold);
        assert!(!r.exact_match);
        assert_eq!(r.semantic, 1.0);
    }

    #[test]
    fn component_checks() {
        let gold = q("SELECT MAX(a) AS MAX_a, b FROM t ORDER BY a ASC, b DESC");
        let r = grade("SELECT MIN(a) AS MIN_a, b FROM t ORDER BY a ASC, b DESC", &gold);
        assert_eq!(r.implementation, 0.75);
        let r = grade("SELECT MAX(a) AS MAX_a, b FROM t ORDER BY a ASC, b ASC", &gold);
        assert_eq!(r.implementation, 0.875);
        let r = grade("SELECT MAX(a) AS MAX_a, b FROM t ORDER BY a ASC", &gold);
        assert_eq!(r.implementation, 0.75);

        let gold = q("SELECT a FROM t WHERE a = 1 AND b LIKE '%x%'");
        assert_eq!(grade("SELECT a FROM t WHERE b LIKE '%x%' AND a = 1", &gold).implementation, 1.0);
        let r = grade("SELECT a FROM t WHERE a = 2 AND b LIKE '%x%'", &gold);
        assert_eq!(r.implementation, 0.5);

        let gold = q("SELECT a FROM t JOIN u ON t.a = u.b");
        assert_eq!(grade("SELECT a FROM t", &gold).implementation, 0.0);
        let r = grade("SELECT a FROM t JOIN u ON t.a = u.c", &gold);
        assert!((r.implementation - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_component_damage_lowers_total() {
        let gold = q("SELECT COUNT(a) AS COUNT_a, b FROM t ORDER BY b ASC");
        let mut table = gold.clone();
        table.table = "x".into();
        let mut drop = gold.clone();
        drop.select.pop();
        let mut dir = gold.clone();
        dir.order_by[0].direction = Direction::Desc;
        let mut agg = gold.clone();
        agg.select[0].aggregate = Some(Aggregate::Max);
        for m in [table, drop, dir, agg] {
            let r = grade(&render_sql(&m), &gold);
            assert!(!r.exact_match && r.total < 1.0, "{}", render_sql(&m));
        }
    }

    #[test]
    fn weights_parse_and_validate() {
        assert_eq!("0.5,0.25,0.25".parse::<Weights>().unwrap().structural, 0.5);
        assert!("0.5,0.5,0.5".parse::<Weights>().is_err());
        assert!("1,0".parse::<Weights>().is_err());
        assert!("-1,1,1".parse::<Weights>().is_err());
        let gold = q("SELECT a FROM t");
        let w = Weights::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(grade_with("SELECT a FROM u", &gold, &w).total, 0.5);
    }

    #[test]
    fn batch_accuracy_and_errors() {
        let gold: Vec<GoldRecord> = (0..4)
            .map(|id| GoldRecord {
                id,
                level: if id < 2 { Level::Cs1 } else { Level::Cs2 },
                query: q("SELECT a FROM t"),
            })
            .collect();
        let preds: Vec<(u64, String)> = vec![
            (0, "SELECT a FROM t".into()),
            (1, "banana".into()),
            (2, "SELECT a FROM t".into()),
            (3, "garbage".into()),
        ];
        let s = grade_batch(&preds, &gold, &Weights::default()).unwrap();
        assert_eq!(s.exact_match_accuracy, 0.5);
        assert_eq!(s.mean_total, 0.5);
        assert_eq!(s.per_level[&Level::Cs1].count, 2);
        assert_eq!(s.per_level[&Level::Cs2].exact_match_accuracy, 0.5);

        let s = grade_batch(&preds[..1], &gold, &Weights::default()).unwrap();
        assert_eq!(s.missing, 3);
        assert_eq!(s.exact_match_accuracy, 0.25);

        let mut dup = preds.clone();
        dup.push((0, "x".into()));
        assert_eq!(grade_batch(&dup, &gold, &Weights::default()), Err(GradeError::DuplicateId(0)));
        let unknown = vec![(9, "x".to_string())];
        assert_eq!(grade_batch(&unknown, &gold, &Weights::default()), Err(GradeError::UnknownId(9)));
    }
}
