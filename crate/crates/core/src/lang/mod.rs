//! The line-oriented `.sd` model format.
//!
//! ```text
//! # comment
//! #@slider HIRING DELAY | 0.5 8 0.5
//! hiring rate = MAX(0, quitting rate + (testers needed - effective testing capacity) / HIRING DELAY)
//! ```
//!
//! Each non-blank, non-comment line is `name = expression`. Names are
//! matched case-insensitively with whitespace runs collapsed. Multiword
//! builtins (`IF THEN ELSE`, `DELAY FIXED`, `RANDOM UNIFORM`) are keywords
//! only when followed by `(`.

mod lexer;
mod parser;
mod printer;

use std::fmt;

use serde::Serialize;

pub use parser::{parse_expr, parse_model};
pub use printer::{print_expr, print_model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParseErrorKind {
    Lex,
    Syntax,
    Arity,
    DuplicateDefinition,
    ReservedName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(kind: ParseErrorKind, line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {:?} error: {}",
            self.line, self.column, self.kind, self.message
        )
    }
}

impl std::error::Error for ParseError {}
