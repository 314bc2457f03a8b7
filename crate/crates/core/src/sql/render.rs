//! Canonical single-line rendering.

use super::ast::SqlQuery;

/// A located piece of a rendered query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SqlPart {
    /// Field of select item `i` (inside the parentheses when aggregated).
    SelectField(usize),
    /// Aggregate function name of select item `i`.
    SelectAggregate(usize),
    Table,
    JoinTable,
    JoinLeftKey,
    JoinRightKey,
    FilterField(usize),
    OrderField(usize),
    OrderDirection(usize),
}

/// Char ranges of the parts of a rendered query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SqlSpans {
    spans: Vec<(SqlPart, usize, usize)>,
}

impl SqlSpans {
    pub fn get(&self, part: SqlPart) -> Option<(usize, usize)> {
        self.spans.iter().find(|(p, _, _)| *p == part).map(|&(_, a, b)| (a, b))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(SqlPart, usize, usize)> {
        self.spans.iter()
    }
}

struct Writer {
    out: String,
    chars: usize,
    spans: SqlSpans,
}

impl Writer {
    fn push(&mut self, s: &str) {
        self.out.push_str(s);
        self.chars += s.chars().count();
    }

    fn part(&mut self, part: SqlPart, s: &str) {
        let start = self.chars;
        self.push(s);
        self.spans.spans.push((part, start, self.chars));
    }
}

pub fn render_sql(query: &SqlQuery) -> String {
    render_sql_spans(query).0
}

/// Renders the query and records where each part landed.
pub fn render_sql_spans(query: &SqlQuery) -> (String, SqlSpans) {
    let mut w = Writer {
        out: String::with_capacity(128),
        chars: 0,
        spans: SqlSpans::default(),
    };
    w.push("SELECT ");
    for (i, item) in query.select.iter().enumerate() {
        if i > 0 {
            w.push(", ");
        }
        match item.aggregate {
            Some(agg) => {
                w.part(SqlPart::SelectAggregate(i), agg.as_str());
                w.push("(");
                w.part(SqlPart::SelectField(i), &item.field);
                w.push(") AS ");
                w.push(&item.alias().unwrap());
            }
            None => w.part(SqlPart::SelectField(i), &item.field),
        }
    }
    w.push(" FROM ");
    w.part(SqlPart::Table, &query.table);
    if let Some(join) = &query.join {
        w.push(" JOIN ");
        w.part(SqlPart::JoinTable, &join.right_table);
        w.push(" ON ");
        w.push(&query.table);
        w.push(".");
        w.part(SqlPart::JoinLeftKey, &join.left_key);
        w.push(" = ");
        w.push(&join.right_table);
        w.push(".");
        w.part(SqlPart::JoinRightKey, &join.right_key);
    }
    for (i, filter) in query.filters.iter().enumerate() {
        w.push(if i == 0 { " WHERE " } else { " AND " });
        w.part(SqlPart::FilterField(i), &filter.field);
        w.push(" ");
        w.push(filter.operator.as_str());
        w.push(" ");
        w.push(&filter.literal.to_string());
    }
    for (i, key) in query.order_by.iter().enumerate() {
        w.push(if i == 0 { " ORDER BY " } else { ", " });
        w.part(SqlPart::OrderField(i), &key.field);
        w.push(" ");
        w.part(SqlPart::OrderDirection(i), key.direction.as_str());
    }
    (w.out, w.spans)
}
