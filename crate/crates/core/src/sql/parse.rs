//! Tokenizer and recursive-descent parser for the restricted grammar.
//!
//! ```text
//! query   := SELECT item {, item} FROM ident [join] [where] [order] [;]
//! item    := ident | AGG ( ident ) [AS alias]
//! join    := JOIN ident ON ident . ident = ident . ident
//! where   := WHERE filter {AND filter}
//! filter  := ident op literal
//! order   := ORDER BY ident [ASC | DESC] {, ident [ASC | DESC]}
//! ```
//!
//! Keywords are case-insensitive, identifiers are case-sensitive. Positions
//! in errors are char offsets into the input.

use std::fmt;

use thiserror::Error;

use super::ast::*;

/// Words that can never be identifiers.
const RESERVED: &[&str] = &[
    "SELECT", "FROM", "JOIN", "ON", "WHERE", "AND", "ORDER", "BY", "ASC", "DESC", "AS", "LIKE", "TRUE",
    "FALSE", "COUNT", "SUM", "AVG", "MIN", "MAX", "GROUP", "HAVING", "LIMIT", "OFFSET", "UNION",
    "INTERSECT", "EXCEPT", "DISTINCT", "OR", "NOT", "IN", "BETWEEN", "IS", "NULL", "INNER", "LEFT",
    "RIGHT", "OUTER", "CROSS", "FULL", "NATURAL", "USING", "CREATE", "TABLE", "ALL", "ANY", "CASE",
    "WHEN", "THEN", "ELSE", "END", "WITH", "VALUES", "INSERT", "UPDATE", "DELETE", "SET", "INTO",
    "DROP", "ALTER", "INDEX", "PRIMARY", "KEY", "DEFAULT", "EXISTS",
];

/// Clause keywords outside the grammar that get a dedicated error.
const UNSUPPORTED_CLAUSES: &[&str] = &["GROUP", "HAVING", "LIMIT", "OFFSET", "UNION", "INTERSECT", "EXCEPT"];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("at {position}: expected {}, found {found}", .expected.join(" or "))]
    Syntax {
        position: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("at {position}: {clause} is not supported")]
    UnknownClause { position: usize, clause: String },
    #[error("at {position}: {message}")]
    Invalid { position: usize, message: String },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. }
            | ParseError::UnknownClause { position, .. }
            | ParseError::Invalid { position, .. } => *position,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Word(String),
    Number(String),
    Str(String),
    Punct(&'static str),
    Other(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "{w:?}"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Str(s) => write!(f, "string '{s}'"),
            Tok::Punct(p) => write!(f, "{p:?}"),
            Tok::Other(c) => write!(f, "{c:?}"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: usize,
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Word(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            Tok::Number(chars[start..i].iter().collect())
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(ParseError::Syntax {
                            position: start,
                            expected: vec!["closing quote"],
                            found: "end of input".into(),
                        })
                    }
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            Tok::Str(s)
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let punct = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                _ => None,
            };
            if let Some(p) = punct {
                i += 2;
                Tok::Punct(p)
            } else {
                i += 1;
                match c {
                    ',' => Tok::Punct(","),
                    '(' => Tok::Punct("("),
                    ')' => Tok::Punct(")"),
                    '.' => Tok::Punct("."),
                    '=' => Tok::Punct("="),
                    '<' => Tok::Punct("<"),
                    '>' => Tok::Punct(">"),
                    ';' => Tok::Punct(";"),
                    '*' => Tok::Punct("*"),
                    other => Tok::Other(other),
                }
            }
        };
        out.push(Token { tok, pos: start });
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: chars.len(),
    });
    Ok(out)
}

fn is_kw(tok: &Tok, kw: &str) -> bool {
    matches!(tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
}

/// Reports clauses and subqueries the grammar deliberately leaves out.
fn find_unsupported(tokens: &[Token]) -> Option<ParseError> {
    for (i, t) in tokens.iter().enumerate() {
        if let Some(kw) = UNSUPPORTED_CLAUSES.iter().find(|kw| is_kw(&t.tok, kw)) {
            let clause = if *kw == "GROUP" && tokens.get(i + 1).is_some_and(|n| is_kw(&n.tok, "BY")) {
                "GROUP BY".to_string()
            } else {
                kw.to_string()
            };
            return Some(ParseError::UnknownClause {
                position: t.pos,
                clause,
            });
        }
        if t.tok == Tok::Punct("(") && tokens.get(i + 1).is_some_and(|n| is_kw(&n.tok, "SELECT")) {
            return Some(ParseError::UnknownClause {
                position: t.pos,
                clause: "subquery".into(),
            });
        }
    }
    None
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        let t = self.peek();
        ParseError::Syntax {
            position: t.pos,
            expected: expected.to_vec(),
            found: t.tok.to_string(),
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        is_kw(&self.peek().tok, kw)
    }

    fn eat_kw(&mut self, kw: &'static str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &'static str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&[kw]))
        }
    }

    fn eat_punct(&mut self, p: &'static str) -> bool {
        if self.peek().tok == Tok::Punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&[p]))
        }
    }

    fn ident(&mut self, what: &'static str) -> Result<(String, usize), ParseError> {
        match &self.peek().tok {
            Tok::Word(w) if !is_reserved(w) => {
                let w = w.clone();
                let pos = self.bump().pos;
                Ok((w, pos))
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn aggregate(&self) -> Option<Aggregate> {
        match &self.peek().tok {
            Tok::Word(w) => w.parse().ok(),
            _ => None,
        }
    }

    fn select_item(&mut self) -> Result<SelectItem, ParseError> {
        let Some(agg) = self.aggregate() else {
            let (field, _) = self
                .ident("field")
                .map_err(|_| self.error(&["field", "aggregate"]))?;
            if self.at_kw("AS") {
                return Err(ParseError::Invalid {
                    position: self.peek().pos,
                    message: format!("bare field {field} cannot take an alias"),
                });
            }
            return Ok(SelectItem::bare(field));
        };
        self.bump();
        self.expect_punct("(")?;
        let (field, _) = self.ident("field")?;
        self.expect_punct(")")?;
        let item = SelectItem::aggregated(agg, field);
        if self.eat_kw("AS") {
            let (alias, pos) = self.ident("alias")?;
            let expected = item.alias().unwrap();
            if alias != expected {
                return Err(ParseError::Invalid {
                    position: pos,
                    message: format!("alias must be {expected}, found {alias}"),
                });
            }
        }
        Ok(item)
    }

    fn qualified(&mut self) -> Result<(String, String, usize), ParseError> {
        let (table, pos) = self.ident("table")?;
        self.expect_punct(".")?;
        let (field, _) = self.ident("field")?;
        Ok((table, field, pos))
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let t = self.peek().clone();
        let lit = match &t.tok {
            Tok::Number(n) => parse_number(n).ok_or_else(|| ParseError::Invalid {
                position: t.pos,
                message: format!("malformed number {n}"),
            })?,
            Tok::Str(s) => Literal::Str(s.clone()),
            Tok::Word(w) if w.eq_ignore_ascii_case("TRUE") => Literal::Bool(true),
            Tok::Word(w) if w.eq_ignore_ascii_case("FALSE") => Literal::Bool(false),
            _ => return Err(self.error(&["literal"])),
        };
        self.bump();
        Ok(lit)
    }

    fn filter(&mut self) -> Result<WhereFilter, ParseError> {
        let (field, _) = self.ident("field")?;
        let operator = match &self.peek().tok {
            Tok::Punct("=") => Operator::Eq,
            Tok::Punct("<") => Operator::Lt,
            Tok::Punct(">") => Operator::Gt,
            Tok::Punct("<=") => Operator::Le,
            Tok::Punct(">=") => Operator::Ge,
            t if is_kw(t, "LIKE") => Operator::Like,
            _ => return Err(self.error(&["comparison operator"])),
        };
        self.bump();
        let pos = self.peek().pos;
        let literal = self.literal()?;
        if operator == Operator::Like && !matches!(literal, Literal::Str(_)) {
            return Err(ParseError::Invalid {
                position: pos,
                message: "LIKE needs a quoted pattern".into(),
            });
        }
        Ok(WhereFilter {
            field,
            operator,
            literal,
        })
    }

    fn query(&mut self) -> Result<SqlQuery, ParseError> {
        let start = self.peek().pos;
        self.expect_kw("SELECT")?;
        let mut select = vec![self.select_item()?];
        while self.eat_punct(",") {
            select.push(self.select_item()?);
        }
        self.expect_kw("FROM")?;
        let (table, _) = self.ident("table")?;

        let mut join = None;
        if self.eat_kw("JOIN") {
            let (right_table, _) = self.ident("table")?;
            self.expect_kw("ON")?;
            let (t1, k1, p1) = self.qualified()?;
            self.expect_punct("=")?;
            let (t2, k2, p2) = self.qualified()?;
            let clause = if t1 == table && t2 == right_table {
                (k1, k2)
            } else if t2 == table && t1 == right_table {
                (k2, k1)
            } else {
                let position = if t1 == table || t1 == right_table { p2 } else { p1 };
                return Err(ParseError::Invalid {
                    position,
                    message: format!("join condition must relate {table} and {right_table}"),
                });
            };
            if table == right_table {
                return Err(ParseError::Invalid {
                    position: p1,
                    message: "self joins are not supported".into(),
                });
            }
            join = Some(JoinClause {
                right_table,
                left_key: clause.0,
                right_key: clause.1,
            });
        }

        let mut filters = Vec::new();
        if self.eat_kw("WHERE") {
            filters.push(self.filter()?);
            while self.eat_kw("AND") {
                filters.push(self.filter()?);
            }
        }

        let mut order_by = Vec::new();
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            loop {
                let (field, _) = self.ident("field")?;
                let direction = if self.eat_kw("DESC") {
                    Direction::Desc
                } else {
                    self.eat_kw("ASC");
                    Direction::Asc
                };
                order_by.push(OrderKey { field, direction });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }

        self.eat_punct(";");
        if self.peek().tok != Tok::Eof {
            let mut expected = vec!["end of input"];
            if join.is_none() && filters.is_empty() && order_by.is_empty() {
                expected.insert(0, "JOIN");
            }
            if filters.is_empty() && order_by.is_empty() {
                expected.insert(expected.len() - 1, "WHERE");
            }
            if order_by.is_empty() {
                expected.insert(expected.len() - 1, "ORDER BY");
            }
            return Err(self.error(&expected));
        }

        let query = SqlQuery {
            select,
            table,
            join,
            filters,
            order_by,
        };
        query.check_structure().map_err(|e| ParseError::Invalid {
            position: start,
            message: e.to_string(),
        })?;
        Ok(query)
    }
}

fn parse_number(n: &str) -> Option<Literal> {
    let (neg, body) = match n.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, n),
    };
    let sign = if neg { -1 } else { 1 };
    match body.split_once('.') {
        None => body.parse::<i64>().ok().map(|v| Literal::Int(sign * v)),
        Some((whole, frac)) => {
            if whole.is_empty() || frac.is_empty() || frac.len() > 2 || frac.contains('.') {
                return None;
            }
            let scale = if frac.len() == 1 { 10 } else { 1 };
            let whole: i64 = whole.parse().ok()?;
            let frac: i64 = frac.parse::<i64>().ok()? * scale;
            whole.checked_mul(100)?.checked_add(frac).map(|h| Literal::Decimal(sign * h))
        }
    }
}

/// Parses one query in the restricted grammar.
pub fn parse_sql(text: &str) -> Result<SqlQuery, ParseError> {
    let tokens = tokenize(text)?;
    if let Some(err) = find_unsupported(&tokens) {
        return Err(err);
    }
    Parser { tokens, at: 0 }.query()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::render_sql;

    #[test]
    fn parses_reference_join() {
        let q = parse_sql(
            "SELECT is_verified, like_id FROM workflow_templates JOIN pairs ON \
             workflow_templates.like_id = pairs.user_id ORDER BY average_score ASC",
        )
        .unwrap();
        assert_eq!(
            q.join,
            Some(JoinClause {
                right_table: "pairs".into(),
                left_key: "like_id".into(),
                right_key: "user_id".into()
            })
        );
        assert_eq!(q.order_by[0].direction, Direction::Asc);
    }

    #[test]
    fn reversed_on_condition_is_normalized() {
        let a = parse_sql("SELECT a FROM t JOIN u ON u.k = t.j").unwrap();
        let b = parse_sql("SELECT a FROM t JOIN u ON t.j = u.k").unwrap();
        assert_eq!(a, b);
        assert!(parse_sql("SELECT a FROM t JOIN u ON t.j = v.k").is_err());
    }

    #[test]
    fn tolerant_of_case_and_whitespace() {
        let q = parse_sql("  select  count( amount )  as COUNT_amount ,x\n from\torders order by x desc ;").unwrap();
        assert_eq!(render_sql(&q), "SELECT COUNT(amount) AS COUNT_amount, x FROM orders ORDER BY x DESC");
        let q = parse_sql("SELECT x FROM t ORDER BY x").unwrap();
        assert_eq!(q.order_by[0].direction, Direction::Asc);
        let q = parse_sql("SELECT MAX(x) FROM t").unwrap();
        assert_eq!(q.select[0].aggregate, Some(Aggregate::Max));
    }

    #[test]
    fn rejects_star_and_statement_sequences() {
        let err = parse_sql("SELECT * FROM t; DROP TABLE t").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 7, .. }), "{err:?}");
        let err = parse_sql("SELECT x FROM t; SELECT y FROM t").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { position: 17, .. }), "{err:?}");
    }

    #[test]
    fn unsupported_clauses_are_named() {
        for (text, clause) in [
            ("SELECT department FROM employees GROUP BY department", "GROUP BY"),
            ("SELECT x FROM t HAVING x > 1", "HAVING"),
            ("SELECT x FROM t LIMIT 5", "LIMIT"),
            ("SELECT x FROM t UNION SELECT y FROM u", "UNION"),
            ("SELECT x FROM t WHERE x = (SELECT y FROM u)", "subquery"),
        ] {
            match parse_sql(text).unwrap_err() {
                ParseError::UnknownClause { clause: c, .. } => assert_eq!(c, clause),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_wrong_alias_and_invalid_structure() {
        assert!(matches!(
            parse_sql("SELECT COUNT(a) AS total FROM t").unwrap_err(),
            ParseError::Invalid { .. }
        ));
        assert!(parse_sql("SELECT a AS b FROM t").is_err());
        assert!(parse_sql("SELECT a, a FROM t").is_err());
        assert!(parse_sql("SELECT a FROM t WHERE a = 1 AND a = 2").is_err());
        assert!(parse_sql("SELECT a FROM t WHERE a = 1 AND b = 2 AND c = 3 AND d = 4").is_err());
        assert!(parse_sql("SELECT a FROM t WHERE a LIKE 5").is_err());
        assert!(parse_sql("SELECT a FROM select").is_err());
        assert!(parse_sql("SELECT a FROM t WHERE a = 'open").is_err());
    }

    #[test]
    fn literals() {
        let q = parse_sql("SELECT a FROM t WHERE a = 1.5 AND b = 'it''s' AND c = true").unwrap();
        assert_eq!(q.filters[0].literal, Literal::Decimal(150));
        assert_eq!(q.filters[1].literal, Literal::Str("it's".into()));
        assert_eq!(q.filters[2].literal, Literal::Bool(true));
        assert_eq!(render_sql(&q), "SELECT a FROM t WHERE a = 1.50 AND b = 'it''s' AND c = TRUE");
        assert_eq!(parse_number("-3"), Some(Literal::Int(-3)));
        assert_eq!(parse_number("0.05"), Some(Literal::Decimal(5)));
        assert_eq!(parse_number("1.234"), None);
        assert_eq!(parse_number("1."), None);
    }

    #[test]
    fn error_reports_expected_tokens() {
        match parse_sql("SELECT a FROM").unwrap_err() {
            ParseError::Syntax { position, expected, found } => {
                assert_eq!(position, 13);
                assert_eq!(expected, vec!["table"]);
                assert_eq!(found, "end of input");
            }
            other => panic!("{other:?}"),
        }
    }
}
