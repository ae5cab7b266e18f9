use crate::ast::{BuiltinKind, CmpOp};

use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Number(f64),
    Ident(String),
    Builtin(BuiltinKind),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Cmp(CmpOp),
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based character column in the source line.
    pub column: usize,
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == ' ' || c == '\t'
}

/// Tokenize one line fragment. `col_offset` is the column of `chars[0]`.
pub(crate) fn tokenize(src: &str, line: usize, col_offset: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |i: usize, msg: String| ParseError::new(ParseErrorKind::Lex, line, col_offset + i, msg);

    while i < chars.len() {
        let c = chars[i];
        let column = col_offset + i;
        let single = match c {
            ' ' | '\t' => {
                i += 1;
                continue;
            }
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '=' => Some(Tok::Cmp(CmpOp::Eq)),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, column });
            i += 1;
            continue;
        }
        match c {
            '<' => {
                let (tok, len) = match chars.get(i + 1) {
                    Some('=') => (CmpOp::Le, 2),
                    Some('>') => (CmpOp::Ne, 2),
                    _ => (CmpOp::Lt, 1),
                };
                out.push(Token {
                    tok: Tok::Cmp(tok),
                    column,
                });
                i += len;
            }
            '>' => {
                let (tok, len) = match chars.get(i + 1) {
                    Some('=') => (CmpOp::Ge, 2),
                    _ => (CmpOp::Gt, 1),
                };
                out.push(Token {
                    tok: Tok::Cmp(tok),
                    column,
                });
                i += len;
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|e| err(start, format!("bad number {text:?}: {e}")))?;
                out.push(Token {
                    tok: Tok::Number(value),
                    column,
                });
            }
            c if c.is_alphabetic() => {
                let start = i;
                while i < chars.len() && is_ident_continue(chars[i]) {
                    i += 1;
                }
                let mut end = i;
                while end > start && chars[end - 1].is_whitespace() {
                    end -= 1;
                }
                let text: String = chars[start..end].iter().collect();
                let mut j = i;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                let followed_by_paren = chars.get(j) == Some(&'(');
                let words = text.split_whitespace().collect::<Vec<_>>().join(" ");
                let tok = match BuiltinKind::from_key(&words) {
                    Some(b) if followed_by_paren => Tok::Builtin(b),
                    None if followed_by_paren => {
                        return Err(ParseError::new(
                            ParseErrorKind::Syntax,
                            line,
                            column,
                            format!("unknown function {text:?}"),
                        ));
                    }
                    _ => Tok::Ident(text),
                };
                out.push(Token { tok, column });
            }
            other => return Err(err(i, format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}
