//! Abstract syntax for stock-and-flow models.
//!
//! The types here carry no surface syntax; `crate::lang` parses and prints
//! them. Everything is immutable once built and may be shared across runs.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the implicit simulation-time variable.
pub const TIME_NAME: &str = "time";

/// Names of the four control constants, in normalized form.
pub const CONTROL_NAMES: [&str; 4] = ["initial time", "final time", "time step", "saveper"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid name {0:?}: empty after trimming")]
pub struct InvalidName(pub String);

/// A variable name. Equality, ordering and hashing go through the
/// normalized `key`; `canonical` keeps the spelling of the definition.
#[derive(Clone, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct NameKey {
    canonical: String,
    key: String,
}

impl From<NameKey> for String {
    fn from(n: NameKey) -> String {
        n.canonical
    }
}

impl TryFrom<String> for NameKey {
    type Error = InvalidName;

    fn try_from(raw: String) -> Result<Self, InvalidName> {
        normalize_name(&raw)
    }
}

impl NameKey {
    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn is_time(&self) -> bool {
        self.key == TIME_NAME
    }

    pub fn is_control(&self) -> bool {
        CONTROL_NAMES.contains(&self.key.as_str())
    }
}

/// Trim, collapse internal whitespace runs and lowercase.
pub fn normalize_name(raw: &str) -> Result<NameKey, InvalidName> {
    let canonical = raw.trim();
    if canonical.is_empty() {
        return Err(InvalidName(raw.to_string()));
    }
    let key = canonical
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    Ok(NameKey {
        canonical: canonical.to_string(),
        key,
    })
}

impl PartialEq for NameKey {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for NameKey {}

impl Hash for NameKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl PartialOrd for NameKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NameKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Debug for NameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.canonical)
    }
}

impl fmt::Display for NameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn apply(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            BinOp::Add => lhs + rhs,
            BinOp::Sub => lhs - rhs,
            BinOp::Mul => lhs * rhs,
            BinOp::Div => lhs / rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
        }
    }

    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

/// Builtin functions and their fixed arities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BuiltinKind {
    Integ,
    Smooth,
    SmoothI,
    DelayFixed,
    Step,
    RandomUniform,
    IfThenElse,
    Max,
    Min,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 9] = [
        BuiltinKind::Integ,
        BuiltinKind::Smooth,
        BuiltinKind::SmoothI,
        BuiltinKind::DelayFixed,
        BuiltinKind::Step,
        BuiltinKind::RandomUniform,
        BuiltinKind::IfThenElse,
        BuiltinKind::Max,
        BuiltinKind::Min,
    ];

    pub fn arity(self) -> usize {
        match self {
            BuiltinKind::Integ | BuiltinKind::Smooth | BuiltinKind::Step | BuiltinKind::Max | BuiltinKind::Min => 2,
            BuiltinKind::SmoothI | BuiltinKind::DelayFixed | BuiltinKind::RandomUniform | BuiltinKind::IfThenElse => 3,
        }
    }

    /// Surface keyword, upper case with single spaces.
    pub fn keyword(self) -> &'static str {
        match self {
            BuiltinKind::Integ => "INTEG",
            BuiltinKind::Smooth => "SMOOTH",
            BuiltinKind::SmoothI => "SMOOTHI",
            BuiltinKind::DelayFixed => "DELAY FIXED",
            BuiltinKind::Step => "STEP",
            BuiltinKind::RandomUniform => "RANDOM UNIFORM",
            BuiltinKind::IfThenElse => "IF THEN ELSE",
            BuiltinKind::Max => "MAX",
            BuiltinKind::Min => "MIN",
        }
    }

    /// Look up a builtin by an already normalized (lowercase, single-spaced) word run.
    pub fn from_key(key: &str) -> Option<BuiltinKind> {
        BuiltinKind::ALL
            .into_iter()
            .find(|b| b.keyword().eq_ignore_ascii_case(key))
    }

    /// Builtins whose value at a step comes from stored state.
    pub fn is_stateful(self) -> bool {
        matches!(
            self,
            BuiltinKind::Integ
                | BuiltinKind::Smooth
                | BuiltinKind::SmoothI
                | BuiltinKind::DelayFixed
                | BuiltinKind::RandomUniform
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Number(f64),
    Var(NameKey),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Call(BuiltinKind, Vec<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn var(raw: &str) -> Expr {
        Expr::Var(normalize_name(raw).expect("non-empty variable name"))
    }

    /// Every variable name referenced anywhere in the expression.
    pub fn free_vars(&self) -> BTreeSet<NameKey> {
        let mut out = BTreeSet::new();
        self.visit_vars(&mut |n| {
            out.insert(n.clone());
        });
        out
    }

    /// Variable references in order of first appearance (left to right).
    pub fn vars_in_order(&self) -> Vec<NameKey> {
        let mut out: Vec<NameKey> = Vec::new();
        self.visit_vars(&mut |n| {
            if !out.contains(n) {
                out.push(n.clone());
            }
        });
        out
    }

    pub fn visit_vars<F: FnMut(&NameKey)>(&self, f: &mut F) {
        match self {
            Expr::Number(_) => {}
            Expr::Var(n) => f(n),
            Expr::Neg(e) => e.visit_vars(f),
            Expr::Binary(_, l, r) | Expr::Compare(_, l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
        }
    }

    /// Pre-order walk over every node.
    pub fn walk<'a, F: FnMut(&'a Expr)>(&'a self, f: &mut F) {
        f(self);
        match self {
            Expr::Number(_) | Expr::Var(_) => {}
            Expr::Neg(e) => e.walk(f),
            Expr::Binary(_, l, r) | Expr::Compare(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
        }
    }
}

/// Free variables of an expression.
pub fn expr_free_vars(e: &Expr) -> BTreeSet<NameKey> {
    e.free_vars()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub name: NameKey,
    pub rhs: Expr,
    pub source_line: usize,
}

impl Equation {
    /// True when the whole right-hand side is an `INTEG` call.
    pub fn is_stock(&self) -> bool {
        matches!(self.rhs, Expr::Call(BuiltinKind::Integ, _))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliderDirective {
    pub target: NameKey,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl SliderDirective {
    pub fn validate(&self) -> Result<(), String> {
        if self.min.is_nan() || self.max.is_nan() || self.min >= self.max {
            return Err(format!("slider min {} must be below max {}", self.min, self.max));
        }
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(format!("slider step {} must be positive", self.step));
        }
        if self.step > self.max - self.min {
            return Err(format!(
                "slider step {} exceeds range {}..{}",
                self.step, self.min, self.max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelAst {
    pub model_id: String,
    pub equations: Vec<Equation>,
    pub directives: Vec<SliderDirective>,
}

impl ModelAst {
    pub fn equation(&self, name: &NameKey) -> Option<&Equation> {
        self.equations.iter().find(|e| &e.name == name)
    }

    pub fn equation_by_name(&self, raw: &str) -> Option<&Equation> {
        let key = normalize_name(raw).ok()?;
        self.equation(&key)
    }

    /// Structural equality ignoring source lines and model id.
    pub fn same_structure(&self, other: &ModelAst) -> bool {
        self.equations.len() == other.equations.len()
            && self
                .equations
                .iter()
                .zip(&other.equations)
                .all(|(a, b)| a.name == b.name && a.rhs == b.rhs)
            && self.directives == other.directives
    }
}
