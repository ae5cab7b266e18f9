use std::collections::HashMap;
use std::fmt::Write;

use crate::ast::{BinOp, Expr, ModelAst};

fn precedence(op: BinOp) -> u8 {
    match op {
        BinOp::Add | BinOp::Sub => 1,
        BinOp::Mul | BinOp::Div => 2,
    }
}

const UNARY_PREC: u8 = 3;

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Compare(..) => 0,
        Expr::Binary(op, ..) => precedence(*op),
        Expr::Neg(_) => UNARY_PREC,
        _ => 4,
    }
}

struct Printer<'a> {
    canonical: HashMap<&'a str, &'a str>,
}

impl Printer<'_> {
    fn write_operand(&self, out: &mut String, e: &Expr, parens: bool) {
        if parens {
            out.push('(');
            self.write(out, e);
            out.push(')');
        } else {
            self.write(out, e);
        }
    }

    fn write(&self, out: &mut String, e: &Expr) {
        match e {
            Expr::Number(v) => {
                let _ = write!(out, "{v}");
            }
            Expr::Var(n) => out.push_str(self.canonical.get(n.key()).copied().unwrap_or(n.canonical())),
            Expr::Neg(inner) => {
                out.push('-');
                self.write_operand(out, inner, expr_prec(inner) < UNARY_PREC);
            }
            Expr::Binary(op, l, r) => {
                let p = precedence(*op);
                self.write_operand(out, l, expr_prec(l) < p);
                let _ = write!(out, " {} ", op.symbol());
                // Left associativity: an equal-precedence right operand needs parens.
                self.write_operand(out, r, expr_prec(r) <= p);
            }
            Expr::Compare(op, l, r) => {
                self.write(out, l);
                let _ = write!(out, " {} ", op.symbol());
                self.write(out, r);
            }
            Expr::Call(kind, args) => {
                out.push_str(kind.keyword());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    self.write(out, a);
                }
                out.push(')');
            }
        }
    }
}

/// Render an expression with minimal parentheses.
pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    Printer {
        canonical: HashMap::new(),
    }
    .write(&mut out, e);
    out
}

/// Canonical model text: slider directives first, then one equation per
/// line in stored order. References are spelled like their definitions.
pub fn print_model(ast: &ModelAst) -> String {
    let printer = Printer {
        canonical: ast
            .equations
            .iter()
            .map(|eq| (eq.name.key(), eq.name.canonical()))
            .collect(),
    };
    let mut out = String::new();
    for d in &ast.directives {
        let target = printer
            .canonical
            .get(d.target.key())
            .copied()
            .unwrap_or(d.target.canonical());
        let _ = writeln!(out, "#@slider {} | {} {} {}", target, d.min, d.max, d.step);
    }
    for eq in &ast.equations {
        out.push_str(eq.name.canonical());
        out.push_str(" = ");
        printer.write(&mut out, &eq.rhs);
        out.push('\n');
    }
    out
}
