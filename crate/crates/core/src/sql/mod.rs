//! The restricted SQL grammar: AST, canonical rendering and parsing.

mod ast;
mod ddl;
mod parse;
mod render;

pub use ast::{
    literal_fits, Aggregate, Direction, JoinClause, Literal, Operator, OrderKey, QueryError, SelectItem,
    SqlQuery, WhereFilter, MAX_FILTERS,
};
pub use ddl::{parse_create_tables, render_create_table, render_create_table_spans, DdlPart};
pub use parse::{is_reserved, parse_sql, ParseError};
pub use render::{render_sql, render_sql_spans, SqlPart, SqlSpans};
