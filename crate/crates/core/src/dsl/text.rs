//! Text syntax of a single constraint.
//!
//! ```text
//! constraint := "TRUE" | feature op (literal | feature)
//! feature    := ident "." ident
//! op         := "=" | "<=" | ">="
//! literal    := "true" | "false" | "undefined" | number | '"' chars '"'
//! ident      := [A-Za-z_][A-Za-z0-9_-]*
//! ```
//!
//! Whitespace may appear between tokens. Inside a quoted symbol, `\"` and
//! `\\` escape a quote and a backslash.

use std::fmt;

use thiserror::Error;

use crate::model::{Constraint, Feature, ModelError, Op, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Byte offset into the input.
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "at byte {}: expected {}, found {}",
            self.offset,
            self.expected.join(" or "),
            self.found
        )
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        self.error_at(self.pos, expected)
    }

    fn error_at(&self, offset: usize, expected: &[&'static str]) -> ParseError {
        let found = match self.src[offset..].chars().next() {
            None => "end of input".to_string(),
            Some(c) => format!("{c:?}"),
        };
        ParseError {
            offset,
            expected: expected.to_vec(),
            found,
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let rest = self.rest();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_' || c == '-'
            };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        if end == 0 {
            return None;
        }
        self.pos += end;
        Some(&rest[..end])
    }

    /// Parses `ident "." ident` once the object identifier has been read.
    fn feature_tail(&mut self, object: &str) -> Result<Feature, ParseError> {
        if self.peek() != Some('.') {
            return Err(self.error(&["'.'"]));
        }
        self.pos += 1;
        let at = self.pos;
        let attribute = self
            .ident()
            .ok_or_else(|| self.error(&["attribute name"]))?;
        Feature::new(object, attribute).map_err(|_| self.error_at(at, &["attribute name"]))
    }

    fn feature(&mut self) -> Result<Feature, ParseError> {
        let object = self.ident().ok_or_else(|| self.error(&["feature"]))?;
        self.feature_tail(object)
    }

    fn op(&mut self) -> Result<Op, ParseError> {
        let rest = self.rest();
        let (op, len) = if rest.starts_with("<=") {
            (Op::Le, 2)
        } else if rest.starts_with(">=") {
            (Op::Ge, 2)
        } else if rest.starts_with('=') {
            (Op::Eq, 1)
        } else {
            return Err(self.error(&["'='", "'<='", "'>='"]));
        };
        self.pos += len;
        Ok(op)
    }

    fn number(&mut self) -> Result<Value, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
            *i > s
        };
        if i < bytes.len() && bytes[i] == b'-' {
            i += 1;
        }
        if !digits(&mut i) {
            return Err(self.error_at(i, &["digit"]));
        }
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            if !digits(&mut i) {
                return Err(self.error_at(i, &["digit"]));
            }
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            i += 1;
            if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                i += 1;
            }
            if !digits(&mut i) {
                return Err(self.error_at(i, &["digit"]));
            }
        }
        let text = &self.src[start..i];
        let n: f64 = text
            .parse()
            .map_err(|_| self.error_at(start, &["number"]))?;
        let value = Value::number(n).map_err(|_| self.error_at(start, &["finite number"]))?;
        self.pos = i;
        Ok(value)
    }

    fn quoted(&mut self) -> Result<Value, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error(&["'\"'"])),
                Some('"') => {
                    self.pos += 1;
                    break;
                }
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(c @ ('"' | '\\')) => {
                            out.push(c);
                            self.pos += 1;
                        }
                        _ => return Err(self.error(&["'\"'", "'\\\\'"])),
                    }
                }
                Some(c) => {
                    out.push(c);
                    self.pos += c.len_utf8();
                }
            }
        }
        Value::symbol(out).map_err(|_| self.error_at(start + 1, &["symbol character"]))
    }
}

/// Parses one constraint, e.g. `Ego.Speed >= LeadingVehicle.Speed`.
pub fn parse_constraint_text(text: &str) -> Result<Constraint, ParseError> {
    let mut cur = Cursor { src: text, pos: 0 };
    cur.skip_ws();
    let head = cur
        .ident()
        .ok_or_else(|| cur.error(&["'TRUE'", "feature"]))?;
    let constraint = if head == "TRUE" && cur.peek() != Some('.') {
        Constraint::True
    } else {
        let lhs = cur.feature_tail(head)?;
        cur.skip_ws();
        let op = cur.op()?;
        cur.skip_ws();
        let rhs_at = cur.pos;
        match cur.peek() {
            Some('"') => Constraint::feature_value(lhs, op, cur.quoted()?)
                .expect("only undefined is restricted"),
            Some(c) if c == '-' || c.is_ascii_digit() => {
                Constraint::feature_value(lhs, op, cur.number()?)
                    .expect("only undefined is restricted")
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let word = cur.ident().expect("peeked an identifier start");
                if cur.peek() == Some('.') {
                    Constraint::feature_feature(lhs, op, cur.feature_tail(word)?)
                } else {
                    let value = match word {
                        "true" => Value::Bool(true),
                        "false" => Value::Bool(false),
                        "undefined" => Value::Undefined,
                        _ => return Err(cur.error(&["'.'"])),
                    };
                    Constraint::feature_value(lhs, op, value).map_err(|e| match e {
                        ModelError::UndefinedOrdering => ParseError {
                            offset: rhs_at,
                            expected: vec!["literal other than undefined for an ordering"],
                            found: "undefined".to_string(),
                        },
                        _ => unreachable!(),
                    })?
                }
            }
            _ => return Err(cur.error(&["literal", "feature"])),
        }
    };
    cur.skip_ws();
    if cur.pos != text.len() {
        return Err(cur.error(&["end of input"]));
    }
    Ok(constraint)
}

/// Parses a bare `Object.Attribute` feature name.
pub fn parse_feature_text(text: &str) -> Result<Feature, ParseError> {
    let mut cur = Cursor { src: text, pos: 0 };
    let f = cur.feature()?;
    if cur.pos != text.len() {
        return Err(cur.error(&["end of input"]));
    }
    Ok(f)
}
