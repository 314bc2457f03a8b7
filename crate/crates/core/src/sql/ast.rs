use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::SchemaContext;
use crate::vocab::{BaseKind, SqlType};

/// Maximum number of WHERE filters in one query.
pub const MAX_FILTERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [
        Aggregate::Count,
        Aggregate::Sum,
        Aggregate::Avg,
        Aggregate::Min,
        Aggregate::Max,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Count => "COUNT",
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
            Aggregate::Min => "MIN",
            Aggregate::Max => "MAX",
        }
    }

    /// Aggregates that may be applied to a column of the given kind.
    pub fn legal_for(kind: BaseKind) -> &'static [Aggregate] {
        use Aggregate::*;
        match kind {
            BaseKind::Numeric => &[Count, Sum, Avg, Min, Max],
            BaseKind::Text | BaseKind::Temporal => &[Count, Min, Max],
            BaseKind::Boolean | BaseKind::Binary | BaseKind::Spatial => &[Count],
        }
    }

    pub fn is_legal_for(self, kind: BaseKind) -> bool {
        Aggregate::legal_for(kind).contains(&self)
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Aggregate::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown aggregate {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectItem {
    pub field: String,
    pub aggregate: Option<Aggregate>,
}

impl SelectItem {
    pub fn bare(field: impl Into<String>) -> Self {
        SelectItem {
            field: field.into(),
            aggregate: None,
        }
    }

    pub fn aggregated(aggregate: Aggregate, field: impl Into<String>) -> Self {
        SelectItem {
            field: field.into(),
            aggregate: Some(aggregate),
        }
    }

    /// `<KIND>_<field>` for aggregated items.
    pub fn alias(&self) -> Option<String> {
        self.aggregate.map(|a| format!("{}_{}", a.as_str(), self.field))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Asc,
    Desc,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Asc => "ASC",
            Direction::Desc => "DESC",
        }
    }

    pub fn flipped(self) -> Direction {
        match self {
            Direction::Asc => Direction::Desc,
            Direction::Desc => Direction::Asc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderKey {
    pub field: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "LIKE")]
    Like,
}

impl Operator {
    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Lt => "<",
            Operator::Gt => ">",
            Operator::Le => "<=",
            Operator::Ge => ">=",
            Operator::Like => "LIKE",
        }
    }

    /// Operators usable on a column of the given kind; empty when the kind
    /// is not filterable.
    pub fn legal_for(kind: BaseKind) -> &'static [Operator] {
        use Operator::*;
        match kind {
            BaseKind::Numeric => &[Eq, Lt, Gt, Le, Ge],
            BaseKind::Text => &[Eq, Like],
            BaseKind::Temporal => &[Eq, Lt, Gt],
            BaseKind::Boolean => &[Eq],
            BaseKind::Binary | BaseKind::Spatial => &[],
        }
    }
}

/// A WHERE literal. Decimals are stored in hundredths so values compare
/// exactly and render with two places.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    Decimal(i64),
    Str(String),
    Bool(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(n) => write!(f, "{n}"),
            Literal::Decimal(h) => {
                let sign = if *h < 0 { "-" } else { "" };
                let abs = h.unsigned_abs();
                write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
            }
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Bool(true) => f.write_str("TRUE"),
            Literal::Bool(false) => f.write_str("FALSE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WhereFilter {
    pub field: String,
    pub operator: Operator,
    pub literal: Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JoinClause {
    pub right_table: String,
    pub left_key: String,
    pub right_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SqlQuery {
    pub select: Vec<SelectItem>,
    pub table: String,
    pub join: Option<JoinClause>,
    pub filters: Vec<WhereFilter>,
    pub order_by: Vec<OrderKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("select list is empty")]
    EmptySelect,
    #[error("select item {0} appears twice")]
    DuplicateItem(String),
    #[error("{0} filters (at most {MAX_FILTERS})")]
    TooManyFilters(usize),
    #[error("field {0} is filtered twice")]
    DuplicateFilter(String),
    #[error("query reads table {found} but the schema defines {expected}")]
    TableMismatch { expected: String, found: String },
    #[error("join table {0} is not in the schema")]
    UnknownJoinTable(String),
    #[error("unknown field {field} in table {table}")]
    UnknownField { table: String, field: String },
    #[error("{aggregate} cannot be applied to {field} ({kind})")]
    IllegalAggregate { field: String, aggregate: Aggregate, kind: BaseKind },
    #[error("operator {operator} cannot be applied to {field} ({kind})", operator = .operator.as_str())]
    IllegalOperator { field: String, operator: Operator, kind: BaseKind },
    #[error("literal {literal} does not fit {field} ({sql_type})")]
    IllegalLiteral { field: String, literal: Literal, sql_type: SqlType },
    #[error("join keys {left} and {right} have different kinds")]
    IncompatibleJoinKeys { left: String, right: String },
}

impl SqlQuery {
    /// A bare `SELECT fields FROM table`.
    pub fn simple<S: AsRef<str>>(table: &str, fields: &[S]) -> SqlQuery {
        SqlQuery {
            select: fields.iter().map(|f| SelectItem::bare(f.as_ref())).collect(),
            table: table.to_string(),
            join: None,
            filters: Vec::new(),
            order_by: Vec::new(),
        }
    }

    pub fn has_aggregates(&self) -> bool {
        self.select.iter().any(|s| s.aggregate.is_some())
    }

    /// Schema-independent invariants.
    pub fn check_structure(&self) -> Result<(), QueryError> {
        if self.select.is_empty() {
            return Err(QueryError::EmptySelect);
        }
        for (i, item) in self.select.iter().enumerate() {
            if self.select[..i].contains(item) {
                let shown = item.alias().unwrap_or_else(|| item.field.clone());
                return Err(QueryError::DuplicateItem(shown));
            }
        }
        if self.filters.len() > MAX_FILTERS {
            return Err(QueryError::TooManyFilters(self.filters.len()));
        }
        for (i, f) in self.filters.iter().enumerate() {
            if self.filters[..i].iter().any(|g| g.field == f.field) {
                return Err(QueryError::DuplicateFilter(f.field.clone()));
            }
        }
        Ok(())
    }

    /// Full validation against the schema the query was written for.
    pub fn validate(&self, schema: &SchemaContext) -> Result<(), QueryError> {
        self.check_structure()?;
        if self.table != schema.main.name {
            return Err(QueryError::TableMismatch {
                expected: schema.main.name.clone(),
                found: self.table.clone(),
            });
        }
        let main_type = |field: &str| {
            schema.main.column_type(field).ok_or_else(|| QueryError::UnknownField {
                table: self.table.clone(),
                field: field.to_string(),
            })
        };
        for item in &self.select {
            let ty = main_type(&item.field)?;
            if let Some(agg) = item.aggregate {
                if !agg.is_legal_for(ty.base_kind()) {
                    return Err(QueryError::IllegalAggregate {
                        field: item.field.clone(),
                        aggregate: agg,
                        kind: ty.base_kind(),
                    });
                }
            }
        }
        for key in &self.order_by {
            main_type(&key.field)?;
        }
        for filter in &self.filters {
            let ty = main_type(&filter.field)?;
            if !Operator::legal_for(ty.base_kind()).contains(&filter.operator) {
                return Err(QueryError::IllegalOperator {
                    field: filter.field.clone(),
                    operator: filter.operator,
                    kind: ty.base_kind(),
                });
            }
            if !literal_fits(&filter.literal, filter.operator, ty) {
                return Err(QueryError::IllegalLiteral {
                    field: filter.field.clone(),
                    literal: filter.literal.clone(),
                    sql_type: ty,
                });
            }
        }
        if let Some(join) = &self.join {
            let right = schema
                .join
                .as_ref()
                .filter(|t| t.name == join.right_table)
                .ok_or_else(|| QueryError::UnknownJoinTable(join.right_table.clone()))?;
            let left_ty = main_type(&join.left_key)?;
            let right_ty = right.column_type(&join.right_key).ok_or_else(|| QueryError::UnknownField {
                table: right.name.clone(),
                field: join.right_key.clone(),
            })?;
            if left_ty.base_kind() != right_ty.base_kind() {
                return Err(QueryError::IncompatibleJoinKeys {
                    left: join.left_key.clone(),
                    right: join.right_key.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Whether `literal` is a well-formed value for a column of type `ty` under
/// `operator`. Temporal literals must use the type's calendar format.
pub fn literal_fits(literal: &Literal, operator: Operator, ty: SqlType) -> bool {
    use crate::vocab::TypeKeyword as K;
    match (ty.base_kind(), literal) {
        (BaseKind::Numeric, Literal::Int(_)) => true,
        (BaseKind::Numeric, Literal::Decimal(_)) => !ty.keyword().is_integral(),
        (BaseKind::Text, Literal::Str(s)) => operator != Operator::Like || is_like_pattern(s),
        (BaseKind::Temporal, Literal::Str(s)) => match ty.keyword() {
            K::Date => is_date(s),
            K::Time => is_time(s),
            _ => s.split_once(' ').is_some_and(|(d, t)| is_date(d) && is_time(t)),
        },
        (BaseKind::Boolean, Literal::Bool(_)) => true,
        _ => false,
    }
}

fn is_like_pattern(s: &str) -> bool {
    s.len() >= 2 && s.starts_with('%') && s.ends_with('%')
}

fn digits(s: &str, n: usize) -> Option<u32> {
    (s.len() == n && s.bytes().all(|b| b.is_ascii_digit())).then(|| s.parse().unwrap())
}

fn is_date(s: &str) -> bool {
    let parts: Vec<&str> = s.split('-').collect();
    match parts[..] {
        [y, m, d] => {
            digits(y, 4).is_some()
                && digits(m, 2).is_some_and(|m| (1..=12).contains(&m))
                && digits(d, 2).is_some_and(|d| (1..=31).contains(&d))
        }
        _ => false,
    }
}

fn is_time(s: &str) -> bool {
    let parts: Vec<&str> = s.split(':').collect();
    match parts[..] {
        [h, m, sec] => {
            digits(h, 2).is_some_and(|h| h < 24)
                && digits(m, 2).is_some_and(|m| m < 60)
                && digits(sec, 2).is_some_and(|s| s < 60)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_legality_table() {
        assert!(Aggregate::Max.is_legal_for(BaseKind::Text));
        assert!(!Aggregate::Sum.is_legal_for(BaseKind::Text));
        for kind in [BaseKind::Boolean, BaseKind::Binary, BaseKind::Spatial] {
            assert_eq!(Aggregate::legal_for(kind), &[Aggregate::Count]);
        }
        assert_eq!(Aggregate::legal_for(BaseKind::Numeric).len(), 5);
    }

    #[test]
    fn alias_follows_kind_and_field() {
        let item = SelectItem::aggregated(Aggregate::Count, "total_price");
        assert_eq!(item.alias().as_deref(), Some("COUNT_total_price"));
        assert_eq!(SelectItem::bare("x").alias(), None);
    }

    #[test]
    fn literal_rendering() {
        assert_eq!(Literal::Decimal(123456).to_string(), "1234.56");
        assert_eq!(Literal::Decimal(5).to_string(), "0.05");
        assert_eq!(Literal::Decimal(-250).to_string(), "-2.50");
        assert_eq!(Literal::Str("it's".into()).to_string(), "'it''s'");
        assert_eq!(Literal::Bool(false).to_string(), "FALSE");
    }

    #[test]
    fn temporal_literal_formats() {
        let date: SqlType = "DATE".parse().unwrap();
        let ts: SqlType = "TIMESTAMP".parse().unwrap();
        let time: SqlType = "TIME".parse().unwrap();
        let lit = |s: &str| Literal::Str(s.into());
        assert!(literal_fits(&lit("2021-03-04"), Operator::Eq, date));
        assert!(!literal_fits(&lit("2021-13-04"), Operator::Eq, date));
        assert!(literal_fits(&lit("2021-03-04 10:11:12"), Operator::Lt, ts));
        assert!(!literal_fits(&lit("2021-03-04"), Operator::Lt, ts));
        assert!(literal_fits(&lit("23:59:00"), Operator::Gt, time));
        let int: SqlType = "INTEGER".parse().unwrap();
        assert!(!literal_fits(&Literal::Decimal(150), Operator::Eq, int));
        let text: SqlType = "TEXT".parse().unwrap();
        assert!(literal_fits(&lit("%z%"), Operator::Like, text));
        assert!(!literal_fits(&lit("z"), Operator::Like, text));
    }

    #[test]
    fn structure_rejects_duplicates() {
        let mut q = SqlQuery::simple("t", &["a", "a"]);
        assert_eq!(q.check_structure(), Err(QueryError::DuplicateItem("a".into())));
        q.select[1].aggregate = Some(Aggregate::Count);
        assert_eq!(q.check_structure(), Ok(()));
        q.select.clear();
        assert_eq!(q.check_structure(), Err(QueryError::EmptySelect));
    }
}
