//! Lisp-style S-expressions.
//!
//! This is the universal on-disk and wire syntax of the crate: terms,
//! proof trees, step datasets, traces, and protocol frames are all
//! S-expressions. Three node kinds exist:
//!
//! - bare atoms: runs of characters with no whitespace, parentheses, or
//!   double quotes (`foo`, `H3`, `1.5`);
//! - quoted strings: `"..."` with `\"` and `\\` escapes, used where a
//!   payload may contain spaces (tactic text, messages);
//! - lists: `(item ...)`.
//!
//! Printing is canonical: items separated by single spaces, no trailing
//! whitespace, strings escaped minimally. `parse` then `print` is the
//! identity on printed output.

use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{message} at byte {offset}")]
pub struct SexpError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, SexpError> {
    Err(SexpError {
        offset,
        message: message.into(),
    })
}

impl Sexp {
    pub fn atom(s: impl Into<String>) -> Sexp {
        Sexp::Atom(s.into())
    }

    pub fn string(s: impl Into<String>) -> Sexp {
        Sexp::Str(s.into())
    }

    pub fn list(items: Vec<Sexp>) -> Sexp {
        Sexp::List(items)
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Sexp::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            _ => None,
        }
    }

    /// For a list whose head is the atom `tag`, the items after the head.
    pub fn tagged(&self, tag: &str) -> Option<&[Sexp]> {
        let items = self.as_list()?;
        match items.split_first() {
            Some((Sexp::Atom(head), rest)) if head == tag => Some(rest),
            _ => None,
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Sexp::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn is_atom_char(c: char) -> bool {
    !c.is_whitespace() && c != '(' && c != ')' && c != '"'
}

struct Reader<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn read_string(&mut self) -> Result<Sexp, SexpError> {
        let start = self.pos;
        self.bump(); // opening quote
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return err(start, "unterminated string"),
                Some('"') => return Ok(Sexp::Str(out)),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some(c) => return err(self.pos - c.len_utf8(), "unknown escape"),
                    None => return err(start, "unterminated string"),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn read_atom(&mut self) -> Sexp {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if is_atom_char(c) {
                self.bump();
            } else {
                break;
            }
        }
        Sexp::Atom(self.text[start..self.pos].to_string())
    }

    fn read_expr(&mut self) -> Result<Sexp, SexpError> {
        self.skip_ws();
        match self.peek() {
            None => err(self.pos, "expected an expression"),
            Some('(') => {
                let open = self.pos;
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return err(open, "unbalanced parenthesis"),
                        Some(')') => {
                            self.bump();
                            return Ok(Sexp::List(items));
                        }
                        Some(_) => items.push(self.read_expr()?),
                    }
                }
            }
            Some(')') => err(self.pos, "unexpected closing parenthesis"),
            Some('"') => self.read_string(),
            Some(_) => Ok(self.read_atom()),
        }
    }
}

/// Parse exactly one S-expression; trailing content other than
/// whitespace is an error.
pub fn parse(text: &str) -> Result<Sexp, SexpError> {
    let mut r = Reader { text, pos: 0 };
    let e = r.read_expr()?;
    r.skip_ws();
    if r.pos != text.len() {
        return err(r.pos, "stray characters after the expression");
    }
    Ok(e)
}

/// Parse a whitespace-separated sequence of S-expressions.
pub fn parse_many(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut r = Reader { text, pos: 0 };
    let mut out = Vec::new();
    loop {
        r.skip_ws();
        if r.pos == text.len() {
            return Ok(out);
        }
        out.push(r.read_expr()?);
    }
}
