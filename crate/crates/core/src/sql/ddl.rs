//! `CREATE TABLE` context text.

use super::parse::{tokenize, ParseError, Tok, Token};
use crate::schema::{ColumnDef, SchemaContext, TableDef};
use crate::vocab::SqlType;

/// A located piece of rendered context text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DdlPart {
    /// Name of table `t` (0 = main, 1 = join table).
    TableName(usize),
    /// Name of column `c` of table `t`.
    ColumnName(usize, usize),
}

pub fn render_create_table(schema: &SchemaContext) -> String {
    render_create_table_spans(schema).0
}

/// Renders the context and records the char range of every name.
pub fn render_create_table_spans(schema: &SchemaContext) -> (String, Vec<(DdlPart, usize, usize)>) {
    let mut out = String::new();
    let mut spans = Vec::new();
    let mut chars = 0;
    let mut push = |out: &mut String, s: &str, part: Option<DdlPart>, spans: &mut Vec<_>| {
        let start = chars;
        out.push_str(s);
        chars += s.chars().count();
        if let Some(p) = part {
            spans.push((p, start, chars));
        }
    };
    for (t, table) in schema.tables().enumerate() {
        if t > 0 {
            push(&mut out, " ", None, &mut spans);
        }
        push(&mut out, "CREATE TABLE ", None, &mut spans);
        push(&mut out, &table.name, Some(DdlPart::TableName(t)), &mut spans);
        push(&mut out, " ( ", None, &mut spans);
        for (c, col) in table.columns.iter().enumerate() {
            if c > 0 {
                push(&mut out, ", ", None, &mut spans);
            }
            push(&mut out, &col.name, Some(DdlPart::ColumnName(t, c)), &mut spans);
            push(&mut out, " ", None, &mut spans);
            push(&mut out, &col.sql_type.to_string(), None, &mut spans);
        }
        push(&mut out, " )", None, &mut spans);
    }
    (out, spans)
}

struct Cursor {
    tokens: Vec<Token>,
    at: usize,
}

impl Cursor {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        self.at = (self.at + 1).min(self.tokens.len() - 1);
        t
    }

    fn error(&self, expected: &'static str) -> ParseError {
        ParseError::Syntax {
            position: self.peek().pos,
            expected: vec![expected],
            found: self.peek().tok.to_string(),
        }
    }

    fn keyword(&mut self, kw: &'static str) -> Result<(), ParseError> {
        match &self.peek().tok {
            Tok::Word(w) if w.eq_ignore_ascii_case(kw) => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error(kw)),
        }
    }

    fn punct(&mut self, p: &'static str) -> bool {
        if self.peek().tok == Tok::Punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn word(&mut self, what: &'static str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Word(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => Err(self.error(what)),
        }
    }

    fn sql_type(&mut self) -> Result<SqlType, ParseError> {
        let pos = self.peek().pos;
        let mut text = self.word("type")?;
        if self.punct("(") {
            text.push('(');
            loop {
                match self.bump().tok {
                    Tok::Number(n) => text.push_str(&n),
                    _ => return Err(self.error("type parameter")),
                }
                if self.punct(")") {
                    break;
                }
                if !self.punct(",") {
                    return Err(self.error(")"));
                }
                text.push(',');
            }
            text.push(')');
        }
        text.parse().map_err(|message| ParseError::Invalid { position: pos, message })
    }
}

/// Parses context text back into its table definitions.
pub fn parse_create_tables(text: &str) -> Result<Vec<TableDef>, ParseError> {
    let mut cur = Cursor {
        tokens: tokenize(text)?,
        at: 0,
    };
    let mut tables = Vec::new();
    loop {
        cur.keyword("CREATE")?;
        cur.keyword("TABLE")?;
        let name = cur.word("table name")?;
        if !cur.punct("(") {
            return Err(cur.error("("));
        }
        let mut columns = Vec::new();
        loop {
            let col = cur.word("column name")?;
            let sql_type = cur.sql_type()?;
            columns.push(ColumnDef { name: col, sql_type });
            if cur.punct(")") {
                break;
            }
            if !cur.punct(",") {
                return Err(cur.error(","));
            }
        }
        tables.push(TableDef { name, columns });
        if cur.peek().tok == Tok::Eof {
            return Ok(tables);
        }
    }
}
