use super::builtins::{builtin_if_then_else, builtin_random_uniform, builtin_step};
use super::compile::{CExpr, SiteRule};
use super::state::DelayBuffer;

/// Read-only view of everything an expression may touch.
pub(crate) struct Env<'a> {
    pub values: &'a [f64],
    pub t: f64,
    pub step_index: u64,
    pub global_seed: u64,
    pub sites: &'a [SiteRule],
    pub smooth: &'a [f64],
    pub delays: &'a [DelayBuffer],
    pub rng_seeds: &'a [u64],
}

pub(crate) fn eval(e: &CExpr, env: &Env<'_>) -> f64 {
    match e {
        CExpr::Const(v) => *v,
        CExpr::Var(i) => env.values[*i],
        CExpr::Time => env.t,
        CExpr::Neg(x) => -eval(x, env),
        CExpr::Bin(op, l, r) => op.apply(eval(l, env), eval(r, env)),
        CExpr::If {
            op,
            lhs,
            rhs,
            then,
            otherwise,
        } => {
            let cond = op.apply(eval(lhs, env), eval(rhs, env));
            // both branches are evaluated
            let (a, b) = (eval(then, env), eval(otherwise, env));
            builtin_if_then_else(cond, a, b)
        }
        CExpr::Max(a, b) => eval(a, env).max(eval(b, env)),
        CExpr::Min(a, b) => eval(a, env).min(eval(b, env)),
        CExpr::Step(h, s) => builtin_step(eval(h, env), eval(s, env), env.t),
        CExpr::State(site) => match &env.sites[*site] {
            SiteRule::Smooth { slot, .. } => env.smooth[*slot],
            SiteRule::Delay { slot, .. } => env.delays[*slot].front(),
            other => unreachable!("state read of {other:?}"),
        },
        CExpr::Random { site, min, max } => {
            let SiteRule::Random { slot, .. } = &env.sites[*site] else {
                unreachable!("random site")
            };
            builtin_random_uniform(
                eval(min, env),
                eval(max, env),
                env.global_seed,
                env.rng_seeds[*slot],
                *site,
                env.step_index,
            )
        }
    }
}

/// Evaluate a constant expression (no time, no state).
pub(crate) fn eval_pure(e: &CExpr, values: &[f64]) -> f64 {
    let env = Env {
        values,
        t: f64::NAN,
        step_index: 0,
        global_seed: 0,
        sites: &[],
        smooth: &[],
        delays: &[],
        rng_seeds: &[],
    };
    eval(e, &env)
}
