use std::collections::HashMap;

use crate::ast::{normalize_name, BinOp, BuiltinKind, Equation, Expr, ModelAst, NameKey, SliderDirective};

use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, ParseErrorKind};

const SLIDER_PREFIX: &str = "#@slider";

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    /// Column reported for errors at end of input.
    end_column: usize,
    /// Non-fatal errors (arity, placement) collected while parsing.
    errors: Vec<ParseError>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_column, |t| t.column)
    }

    fn error(&self, kind: ParseErrorKind, column: usize, message: impl Into<String>) -> ParseError {
        ParseError::new(kind, self.line, column, message)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        let found = match self.peek() {
            None => "end of line".to_string(),
            Some(t) => format!("{t:?}"),
        };
        self.error(
            ParseErrorKind::Syntax,
            self.column(),
            format!("expected {what}, found {found}"),
        )
    }

    /// comparison := additive (cmp additive)?
    fn comparison(&mut self, allowed: bool) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        if let Some(Tok::Cmp(op)) = self.peek().cloned() {
            let column = self.column();
            self.pos += 1;
            let rhs = self.additive()?;
            if !allowed {
                self.errors.push(self.error(
                    ParseErrorKind::Syntax,
                    column,
                    "comparison is only allowed as the condition of IF THEN ELSE",
                ));
            }
            return Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let column = self.column();
        match self.peek().cloned() {
            Some(Tok::Number(v)) => {
                self.pos += 1;
                Ok(Expr::Number(v))
            }
            Some(Tok::Ident(raw)) => {
                self.pos += 1;
                let name =
                    normalize_name(&raw).map_err(|e| self.error(ParseErrorKind::Syntax, column, e.to_string()))?;
                Ok(Expr::Var(name))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.comparison(false)?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Builtin(kind)) => {
                self.pos += 1;
                self.expect(Tok::LParen, "'('")?;
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        let cond_slot = kind == BuiltinKind::IfThenElse && args.is_empty();
                        let arg_column = self.column();
                        let arg = self.comparison(cond_slot)?;
                        if cond_slot && !matches!(arg, Expr::Compare(..)) {
                            self.errors.push(self.error(
                                ParseErrorKind::Syntax,
                                arg_column,
                                "IF THEN ELSE condition must be a comparison",
                            ));
                        }
                        args.push(arg);
                        if self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "',' or ')'")?;
                if args.len() != kind.arity() {
                    self.errors.push(self.error(
                        ParseErrorKind::Arity,
                        column,
                        format!(
                            "{} takes {} arguments, got {}",
                            kind.keyword(),
                            kind.arity(),
                            args.len()
                        ),
                    ));
                }
                Ok(Expr::Call(kind, args))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

/// Parse a full expression from tokens of one line. Returns every error found.
fn parse_tokens(toks: &[Token], line: usize, end_column: usize) -> Result<Expr, Vec<ParseError>> {
    let mut p = Parser {
        toks,
        pos: 0,
        line,
        end_column,
        errors: Vec::new(),
    };
    let expr = match p.comparison(false) {
        Ok(e) => e,
        Err(e) => {
            p.errors.push(e);
            return Err(p.errors);
        }
    };
    if p.pos < toks.len() {
        p.errors.push(p.unexpected("an operator or end of line"));
    }
    if p.errors.is_empty() {
        Ok(expr)
    } else {
        Err(p.errors)
    }
}

fn parse_fragment(src: &str, line: usize, col_offset: usize) -> Result<Expr, Vec<ParseError>> {
    let toks = tokenize(src, line, col_offset).map_err(|e| vec![e])?;
    let end_column = col_offset + src.chars().count();
    if toks.is_empty() {
        return Err(vec![ParseError::new(
            ParseErrorKind::Syntax,
            line,
            end_column.max(1),
            "missing expression",
        )]);
    }
    parse_tokens(&toks, line, end_column)
}

/// Parse a single expression. Comparisons are accepted only as
/// `IF THEN ELSE` conditions.
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    parse_fragment(source, 1, 1).map_err(|mut errs| errs.swap_remove(0))
}

fn nested_integ_errors(rhs: &Expr, line: usize, column: usize) -> Vec<ParseError> {
    let top = match rhs {
        Expr::Call(BuiltinKind::Integ, args) => args.as_slice(),
        other => std::slice::from_ref(other),
    };
    let mut count = 0;
    for e in top {
        e.walk(&mut |n| {
            if matches!(n, Expr::Call(BuiltinKind::Integ, _)) {
                count += 1;
            }
        });
    }
    (0..count.min(1))
        .map(|_| {
            ParseError::new(
                ParseErrorKind::Arity,
                line,
                column,
                "INTEG must be the entire right-hand side of an equation",
            )
        })
        .collect()
}

fn is_valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic())
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == ' ' || c == '\t')
}

fn column_of(line: &str, byte_idx: usize) -> usize {
    line[..byte_idx].chars().count() + 1
}

struct PendingSlider {
    directive: SliderDirective,
    line: usize,
    column: usize,
}

fn parse_slider(raw: &str, line: usize) -> Result<PendingSlider, ParseError> {
    let body_start = raw.find(SLIDER_PREFIX).unwrap() + SLIDER_PREFIX.len();
    let body = &raw[body_start..];
    let err = |msg: String| ParseError::new(ParseErrorKind::Syntax, line, column_of(raw, body_start), msg);
    let (name, nums) = body
        .split_once('|')
        .ok_or_else(|| err("slider directive needs `<name> | <min> <max> <step>`".into()))?;
    let target = normalize_name(name).map_err(|e| err(e.to_string()))?;
    let values = nums
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad slider number {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let [min, max, step] = values[..] else {
        return Err(err(format!("slider needs 3 numbers, got {}", values.len())));
    };
    let directive = SliderDirective { target, min, max, step };
    directive.validate().map_err(err)?;
    Ok(PendingSlider {
        directive,
        line,
        column: column_of(raw, body_start),
    })
}

/// Parse `.sd` model text. On failure every detected error is returned,
/// ordered by line.
pub fn parse_model(source: &str, model_id: &str) -> Result<ModelAst, Vec<ParseError>> {
    let mut errors = Vec::new();
    let mut equations: Vec<Equation> = Vec::new();
    let mut defined: HashMap<NameKey, usize> = HashMap::new();
    let mut sliders = Vec::new();

    for (idx, raw_line) in source.split('\n').enumerate() {
        let line_no = idx + 1;
        let raw = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        let trimmed = raw.trim_start();
        if trimmed.starts_with(SLIDER_PREFIX) {
            match parse_slider(raw, line_no) {
                Ok(s) => sliders.push(s),
                Err(e) => errors.push(e),
            }
            continue;
        }
        let content = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq_idx) = content.find('=') else {
            errors.push(ParseError::new(
                ParseErrorKind::Syntax,
                line_no,
                column_of(raw, content.len() - content.trim_start().len()),
                "expected `name = expression`",
            ));
            continue;
        };
        let name_src = &content[..eq_idx];
        let name_col = column_of(raw, name_src.len() - name_src.trim_start().len());
        let name = match normalize_name(name_src) {
            Ok(n) if is_valid_identifier(n.canonical()) => n,
            _ => {
                errors.push(ParseError::new(
                    ParseErrorKind::Syntax,
                    line_no,
                    name_col,
                    format!("invalid variable name {:?}", name_src.trim()),
                ));
                continue;
            }
        };
        let rhs_col = column_of(raw, eq_idx + 1);
        let rhs = match parse_fragment(&content[eq_idx + 1..], line_no, rhs_col) {
            Ok(rhs) => rhs,
            Err(errs) => {
                errors.extend(errs);
                continue;
            }
        };
        let integ_errs = nested_integ_errors(&rhs, line_no, rhs_col);
        if !integ_errs.is_empty() {
            errors.extend(integ_errs);
            continue;
        }
        if name.is_time() {
            errors.push(ParseError::new(
                ParseErrorKind::ReservedName,
                line_no,
                name_col,
                format!("{:?} is reserved for simulation time", name.canonical()),
            ));
            continue;
        }
        if let Some(first) = defined.get(&name) {
            errors.push(ParseError::new(
                ParseErrorKind::DuplicateDefinition,
                line_no,
                name_col,
                format!("{:?} already defined on line {first}", name.canonical()),
            ));
            continue;
        }
        defined.insert(name.clone(), line_no);
        equations.push(Equation {
            name,
            rhs,
            source_line: line_no,
        });
    }

    let mut directives: Vec<SliderDirective> = Vec::new();
    for s in sliders {
        if !defined.contains_key(&s.directive.target) {
            errors.push(ParseError::new(
                ParseErrorKind::Syntax,
                s.line,
                s.column,
                format!("slider target {:?} is not defined", s.directive.target.canonical()),
            ));
        } else if directives.iter().any(|d| d.target == s.directive.target) {
            errors.push(ParseError::new(
                ParseErrorKind::DuplicateDefinition,
                s.line,
                s.column,
                format!("second slider for {:?}", s.directive.target.canonical()),
            ));
        } else {
            directives.push(s.directive);
        }
    }

    if errors.is_empty() {
        Ok(ModelAst {
            model_id: model_id.to_string(),
            equations,
            directives,
        })
    } else {
        errors.sort_by_key(|e| (e.line, e.column));
        Err(errors)
    }
}
