use std::collections::HashMap;

use crate::analyzer::{for_each_site, is_constant_expr, ClassifiedModel, InitNode, VarKind};
use crate::ast::{BinOp, BuiltinKind, CmpOp, Expr, NameKey};

use super::{SimError, SimSpec};

/// Expression with names resolved to slots and literal subtrees folded.
#[derive(Debug, Clone)]
pub(crate) enum CExpr {
    Const(f64),
    Var(usize),
    Time,
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    If {
        op: CmpOp,
        lhs: Box<CExpr>,
        rhs: Box<CExpr>,
        then: Box<CExpr>,
        otherwise: Box<CExpr>,
    },
    Max(Box<CExpr>, Box<CExpr>),
    Min(Box<CExpr>, Box<CExpr>),
    Step(Box<CExpr>, Box<CExpr>),
    /// Output of a SMOOTH/SMOOTHI state or a DELAY FIXED buffer.
    State(usize),
    Random {
        site: usize,
        min: Box<CExpr>,
        max: Box<CExpr>,
    },
}

impl CExpr {
    fn as_const(&self) -> Option<f64> {
        match self {
            CExpr::Const(v) => Some(*v),
            _ => None,
        }
    }
}

/// Per-site update rule.
#[derive(Debug, Clone)]
pub(crate) enum SiteRule {
    Stock {
        var: usize,
        slot: usize,
        flow: CExpr,
        init: CExpr,
    },
    Smooth {
        slot: usize,
        input: CExpr,
        time: CExpr,
        init: Option<CExpr>,
    },
    Delay {
        slot: usize,
        input: CExpr,
        delay: CExpr,
        init: CExpr,
    },
    Random {
        slot: usize,
        seed: CExpr,
    },
}

/// Executable plan for a classified model. Immutable; share it across runs.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub classified: ClassifiedModel,
    pub spec_defaults: SimSpec,
    pub(crate) names: Vec<NameKey>,
    pub(crate) kinds: Vec<VarKind>,
    /// Right-hand sides; `None` for stocks (their value lives in a slot).
    pub(crate) rhs: Vec<Option<CExpr>>,
    pub(crate) sites: Vec<SiteRule>,
    pub(crate) step_order: Vec<usize>,
    pub(crate) init_plan: Vec<InitNode>,
    pub(crate) stock_slot: Vec<Option<usize>>,
    /// Constant values with no overrides applied.
    pub(crate) default_constants: Vec<Option<f64>>,
    pub(crate) controls: ControlSlots,
    pub stock_slots: usize,
    pub smooth_slots: usize,
    pub delay_slots: usize,
    pub rng_slots: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ControlSlots {
    pub initial_time: Option<usize>,
    pub final_time: Option<usize>,
    pub time_step: Option<usize>,
    pub saveper: Option<usize>,
}

struct Lowering<'a> {
    index: &'a HashMap<NameKey, usize>,
    next_site: usize,
}

impl Lowering<'_> {
    fn lower(&mut self, e: &Expr) -> CExpr {
        match e {
            Expr::Number(v) => CExpr::Const(*v),
            Expr::Var(n) if n.is_time() => CExpr::Time,
            Expr::Var(n) => CExpr::Var(self.index[n]),
            Expr::Neg(x) => match self.lower(x) {
                CExpr::Const(v) => CExpr::Const(-v),
                x => CExpr::Neg(Box::new(x)),
            },
            Expr::Binary(op, l, r) => {
                let (l, r) = (self.lower(l), self.lower(r));
                match (l.as_const(), r.as_const()) {
                    (Some(a), Some(b)) => CExpr::Const(op.apply(a, b)),
                    _ => CExpr::Bin(*op, Box::new(l), Box::new(r)),
                }
            }
            Expr::Compare(..) => unreachable!("comparisons only appear as IF THEN ELSE conditions"),
            Expr::Call(kind, args) if kind.is_stateful() => {
                let site = self.next_site;
                self.next_site += 1;
                // Arguments are lowered separately by the site rule; keep numbering in step.
                for a in args {
                    self.skip_sites(a);
                }
                match kind {
                    BuiltinKind::RandomUniform => {
                        let mut inner = Lowering {
                            index: self.index,
                            next_site: site + 1,
                        };
                        let min = inner.lower(&args[0]);
                        let max = inner.lower(&args[1]);
                        CExpr::Random {
                            site,
                            min: Box::new(min),
                            max: Box::new(max),
                        }
                    }
                    _ => CExpr::State(site),
                }
            }
            Expr::Call(kind, args) => {
                let mut a: Vec<CExpr> = args.iter().map(|x| self.lower_cond_aware(*kind, x)).collect();
                match kind {
                    BuiltinKind::IfThenElse => {
                        let otherwise = a.pop().unwrap();
                        let then = a.pop().unwrap();
                        let CExpr::If { op, lhs, rhs, .. } = a.pop().unwrap() else {
                            unreachable!("condition lowered as comparison")
                        };
                        if let (Some(x), Some(y), Some(t), Some(o)) =
                            (lhs.as_const(), rhs.as_const(), then.as_const(), otherwise.as_const())
                        {
                            return CExpr::Const(if op.apply(x, y) { t } else { o });
                        }
                        CExpr::If {
                            op,
                            lhs,
                            rhs,
                            then: Box::new(then),
                            otherwise: Box::new(otherwise),
                        }
                    }
                    BuiltinKind::Max | BuiltinKind::Min | BuiltinKind::Step => {
                        let b = a.pop().unwrap();
                        let x = a.pop().unwrap();
                        match (kind, x.as_const(), b.as_const()) {
                            (BuiltinKind::Max, Some(p), Some(q)) => CExpr::Const(p.max(q)),
                            (BuiltinKind::Min, Some(p), Some(q)) => CExpr::Const(p.min(q)),
                            (BuiltinKind::Max, ..) => CExpr::Max(Box::new(x), Box::new(b)),
                            (BuiltinKind::Min, ..) => CExpr::Min(Box::new(x), Box::new(b)),
                            _ => CExpr::Step(Box::new(x), Box::new(b)),
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    fn lower_cond_aware(&mut self, kind: BuiltinKind, e: &Expr) -> CExpr {
        match (kind, e) {
            (BuiltinKind::IfThenElse, Expr::Compare(op, l, r)) => CExpr::If {
                op: *op,
                lhs: Box::new(self.lower(l)),
                rhs: Box::new(self.lower(r)),
                then: Box::new(CExpr::Const(0.0)),
                otherwise: Box::new(CExpr::Const(0.0)),
            },
            _ => self.lower(e),
        }
    }

    fn skip_sites(&mut self, e: &Expr) {
        e.walk(&mut |n| {
            if let Expr::Call(k, _) = n {
                if k.is_stateful() {
                    self.next_site += 1;
                }
            }
        });
    }
}

/// Lower a classified model to an executable plan and fold its constants.
pub fn compile(m: &ClassifiedModel) -> Result<CompiledModel, SimError> {
    let ast = &m.ast;
    let names: Vec<NameKey> = ast.equations.iter().map(|e| e.name.clone()).collect();
    let index: HashMap<NameKey, usize> = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
    let kinds: Vec<VarKind> = names.iter().map(|n| m.kinds[n]).collect();

    let is_const = |n: &NameKey| m.kind(n).is_some_and(|k| k.is_constant());
    let mut controls = ControlSlots::default();
    for (i, eq) in ast.equations.iter().enumerate() {
        if kinds[i] != VarKind::Control {
            continue;
        }
        if !is_constant_expr(&eq.rhs, &is_const) {
            return Err(SimError::NonConstantControl(eq.name.canonical().to_string()));
        }
        let slot = Some(i);
        match eq.name.key() {
            "initial time" => controls.initial_time = slot,
            "final time" => controls.final_time = slot,
            "time step" => controls.time_step = slot,
            _ => controls.saveper = slot,
        }
    }

    // Top-level right-hand sides; each equation's sites are numbered from
    // the running base.
    let mut rhs = Vec::with_capacity(names.len());
    let mut base = 0;
    let mut site_base = Vec::with_capacity(names.len());
    for eq in &ast.equations {
        site_base.push(base);
        let mut low = Lowering {
            index: &index,
            next_site: base,
        };
        if eq.is_stock() {
            low.skip_sites(&eq.rhs);
            rhs.push(None);
        } else {
            rhs.push(Some(low.lower(&eq.rhs)));
        }
        base = low.next_site;
    }

    let mut sites = Vec::with_capacity(m.state_sites.len());
    let mut stock_slot = vec![None; names.len()];
    let (mut stocks, mut smooths, mut delays, mut rngs) = (0, 0, 0, 0);
    let mut site_id = 0;
    for_each_site(ast, |eq_idx, node| {
        let Expr::Call(kind, args) = node else { unreachable!() };
        // Argument i's nested sites start after the sites of arguments < i.
        let mut arg_base = site_id + 1;
        let mut lowered = Vec::with_capacity(args.len());
        for a in args {
            let mut low = Lowering {
                index: &index,
                next_site: arg_base,
            };
            lowered.push(low.lower(a));
            arg_base = low.next_site;
        }
        let mut it = lowered.into_iter();
        let mut next = || it.next().unwrap();
        let rule = match kind {
            BuiltinKind::Integ => {
                stocks += 1;
                stock_slot[eq_idx] = Some(stocks - 1);
                SiteRule::Stock {
                    var: eq_idx,
                    slot: stocks - 1,
                    flow: next(),
                    init: next(),
                }
            }
            BuiltinKind::Smooth | BuiltinKind::SmoothI => {
                smooths += 1;
                let (input, time) = (next(), next());
                let init = (*kind == BuiltinKind::SmoothI).then(&mut next);
                SiteRule::Smooth {
                    slot: smooths - 1,
                    input,
                    time,
                    init,
                }
            }
            BuiltinKind::DelayFixed => {
                delays += 1;
                SiteRule::Delay {
                    slot: delays - 1,
                    input: next(),
                    delay: next(),
                    init: next(),
                }
            }
            _ => {
                rngs += 1;
                let _ = (next(), next());
                SiteRule::Random {
                    slot: rngs - 1,
                    seed: next(),
                }
            }
        };
        sites.push(rule);
        site_id += 1;
    });
    debug_assert_eq!(site_id, m.state_sites.len());

    let mut compiled = CompiledModel {
        classified: m.clone(),
        spec_defaults: SimSpec::default(),
        step_order: m.step_order.iter().map(|n| index[n]).collect(),
        init_plan: m.init_plan.clone(),
        names,
        kinds,
        rhs,
        sites,
        stock_slot,
        default_constants: Vec::new(),
        controls,
        stock_slots: stocks,
        smooth_slots: smooths,
        delay_slots: delays,
        rng_slots: rngs,
    };
    compiled.default_constants = compiled.eval_constants(&HashMap::new())?;
    compiled.spec_defaults = compiled.spec_from_constants(&compiled.default_constants, 0);
    Ok(compiled)
}

impl CompiledModel {
    pub fn model_id(&self) -> &str {
        &self.classified.ast.model_id
    }

    pub fn names(&self) -> &[NameKey] {
        &self.names
    }

    pub fn index_of(&self, name: &NameKey) -> Option<usize> {
        self.classified.index_of(name)
    }

    pub fn kind_of(&self, name: &NameKey) -> Option<VarKind> {
        self.classified.kind(name)
    }

    /// Default (un-overridden) value of a constant or control.
    pub fn constant_value(&self, name: &NameKey) -> Option<f64> {
        self.index_of(name).and_then(|i| self.default_constants[i])
    }

    /// Evaluate every constant in init order with overrides by slot.
    pub(crate) fn eval_constants(&self, overrides: &HashMap<usize, f64>) -> Result<Vec<Option<f64>>, SimError> {
        let mut vals: Vec<Option<f64>> = vec![None; self.names.len()];
        let mut scratch = vec![f64::NAN; self.names.len()];
        for node in &self.init_plan {
            let InitNode::Var(i) = *node else { continue };
            if !self.kinds[i].is_constant() {
                continue;
            }
            let v = match overrides.get(&i) {
                Some(v) => *v,
                None => super::eval::eval_pure(self.rhs[i].as_ref().unwrap(), &scratch),
            };
            if !v.is_finite() {
                return Err(SimError::NonFinite {
                    variable: self.names[i].canonical().to_string(),
                    time: f64::NAN,
                });
            }
            scratch[i] = v;
            vals[i] = Some(v);
        }
        Ok(vals)
    }

    pub(crate) fn spec_from_constants(&self, vals: &[Option<f64>], global_seed: u64) -> SimSpec {
        let get = |slot: Option<usize>| slot.and_then(|i| vals[i]);
        let defaults = SimSpec::default();
        let dt = get(self.controls.time_step).unwrap_or(defaults.dt);
        SimSpec {
            initial_time: get(self.controls.initial_time).unwrap_or(defaults.initial_time),
            final_time: get(self.controls.final_time).unwrap_or(defaults.final_time),
            dt,
            saveper: get(self.controls.saveper).unwrap_or(dt),
            global_seed,
        }
    }
}
