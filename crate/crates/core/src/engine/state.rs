use std::collections::HashMap;

use crate::analyzer::{InitNode, VarKind};

use super::builtins::seed_from_arg;
use super::compile::{CompiledModel, SiteRule};
use super::eval::{eval, Env};
use super::{Overrides, SimError, SimSpec};

/// Fixed-length pipeline for DELAY FIXED.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBuffer {
    buf: Vec<f64>,
    head: usize,
}

impl DelayBuffer {
    pub fn filled(len: usize, value: f64) -> Self {
        assert!(len >= 1);
        DelayBuffer {
            buf: vec![value; len],
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Value pushed `len` steps ago (or the fill value).
    pub fn front(&self) -> f64 {
        self.buf[self.head]
    }

    pub fn push(&mut self, v: f64) {
        self.buf[self.head] = v;
        self.head = (self.head + 1) % self.buf.len();
    }
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub step_index: u64,
    pub spec: SimSpec,
    /// Current value of every variable, in model order.
    pub values: Vec<f64>,
    pub stocks: Vec<f64>,
    pub smooth_states: Vec<f64>,
    pub delay_buffers: Vec<DelayBuffer>,
    pub rng_seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

impl SimState {
    fn env<'a>(&'a self, c: &'a CompiledModel) -> Env<'a> {
        Env {
            values: &self.values,
            t: self.t,
            step_index: self.step_index,
            global_seed: self.spec.global_seed,
            sites: &c.sites,
            smooth: &self.smooth_states,
            delays: &self.delay_buffers,
            rng_seeds: &self.rng_seeds,
        }
    }

    pub fn value(&self, c: &CompiledModel, name: &str) -> Option<f64> {
        let key = crate::ast::normalize_name(name).ok()?;
        c.index_of(&key).map(|i| self.values[i])
    }

    fn check(&self, c: &CompiledModel, i: usize) -> Result<(), SimError> {
        if self.values[i].is_finite() {
            Ok(())
        } else {
            Err(SimError::NonFinite {
                variable: c.names[i].canonical().to_string(),
                time: self.t,
            })
        }
    }

    /// Recompute stock values and every auxiliary for the current time.
    fn evaluate(&mut self, c: &CompiledModel) -> Result<(), SimError> {
        for (i, slot) in c.stock_slot.iter().enumerate() {
            if let Some(s) = slot {
                self.values[i] = self.stocks[*s];
                self.check(c, i)?;
            }
        }
        for &i in &c.step_order {
            let v = eval(c.rhs[i].as_ref().unwrap(), &self.env(c));
            self.values[i] = v;
            self.check(c, i)?;
        }
        Ok(())
    }
}

/// Values keyed by variable index.
pub(crate) type SlotValues = HashMap<usize, f64>;

/// Split overrides into constant overrides (by slot) and stock initial
/// overrides, rejecting anything else.
pub(crate) fn resolve_overrides(
    c: &CompiledModel,
    overrides: &Overrides,
) -> Result<(SlotValues, SlotValues), SimError> {
    let mut constants = HashMap::new();
    let mut stocks = HashMap::new();
    for (name, value) in overrides {
        let i = c
            .index_of(name)
            .ok_or_else(|| SimError::UnknownVariable(name.canonical().to_string()))?;
        if !value.is_finite() {
            return Err(SimError::BadOverride {
                name: name.canonical().to_string(),
                reason: format!("value {value} is not finite"),
            });
        }
        match c.kinds[i] {
            VarKind::Constant | VarKind::Control => constants.insert(i, *value),
            VarKind::Stock => stocks.insert(i, *value),
            VarKind::Auxiliary => {
                return Err(SimError::BadOverride {
                    name: name.canonical().to_string(),
                    reason: "only constants and stock initial values can be overridden".into(),
                })
            }
        };
    }
    Ok((constants, stocks))
}

fn delay_steps(delay: f64, dt: f64, owner: &str, warnings: &mut Vec<String>) -> usize {
    let k = (delay / dt).round().max(1.0) as usize;
    if (k as f64 * dt - delay).abs() > 1e-9 * delay.abs().max(1.0) {
        warnings.push(format!(
            "DELAY FIXED in {owner:?}: delay {delay} is not a multiple of TIME STEP {dt}; using {k} steps"
        ));
    }
    k
}

/// Build the state at the initial time and evaluate every variable there.
pub fn initialize(c: &CompiledModel, overrides: &Overrides, spec: &SimSpec) -> Result<SimState, SimError> {
    spec.validate()?;
    let (mut const_over, stock_over) = resolve_overrides(c, overrides)?;
    // The run's spec is authoritative for control variables.
    for (slot, v) in [
        (c.controls.initial_time, spec.initial_time),
        (c.controls.final_time, spec.final_time),
        (c.controls.time_step, spec.dt),
        (c.controls.saveper, spec.saveper),
    ] {
        if let Some(i) = slot {
            const_over.insert(i, v);
        }
    }
    let constants = if const_over.is_empty() {
        c.default_constants.clone()
    } else {
        c.eval_constants(&const_over)?
    };

    let n = c.names.len();
    let mut s = SimState {
        t: spec.initial_time,
        step_index: 0,
        spec: spec.clone(),
        values: vec![f64::NAN; n],
        stocks: vec![f64::NAN; c.stock_slots],
        smooth_states: vec![f64::NAN; c.smooth_slots],
        delay_buffers: vec![DelayBuffer::filled(1, f64::NAN); c.delay_slots],
        rng_seeds: vec![0; c.rng_slots],
        warnings: Vec::new(),
    };
    for (i, v) in constants.iter().enumerate() {
        if let Some(v) = v {
            s.values[i] = *v;
        }
    }

    for node in &c.init_plan {
        match *node {
            InitNode::Var(i) => match c.kinds[i] {
                VarKind::Constant | VarKind::Control => {}
                VarKind::Stock => {
                    let SiteRule::Stock { init, slot, .. } = c
                        .sites
                        .iter()
                        .find(|r| matches!(r, SiteRule::Stock { var, .. } if *var == i))
                        .expect("stock site")
                    else {
                        unreachable!()
                    };
                    let v = match stock_over.get(&i) {
                        Some(v) => *v,
                        None => eval(init, &s.env(c)),
                    };
                    s.stocks[*slot] = v;
                    s.values[i] = v;
                    s.check(c, i)?;
                }
                VarKind::Auxiliary => {
                    s.values[i] = eval(c.rhs[i].as_ref().unwrap(), &s.env(c));
                    s.check(c, i)?;
                }
            },
            InitNode::Site(id) => {
                let owner = c.classified.state_sites[id].owner.canonical().to_string();
                let non_finite = |v: f64| -> Result<f64, SimError> {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(SimError::NonFinite {
                            variable: owner.clone(),
                            time: spec.initial_time,
                        })
                    }
                };
                match &c.sites[id] {
                    SiteRule::Stock { .. } => {}
                    SiteRule::Smooth { slot, input, init, .. } => {
                        let v = eval(init.as_ref().unwrap_or(input), &s.env(c));
                        s.smooth_states[*slot] = non_finite(v)?;
                    }
                    SiteRule::Delay { slot, delay, init, .. } => {
                        let d = non_finite(eval(delay, &s.env(c)))?;
                        let k = delay_steps(d, spec.dt, &owner, &mut s.warnings);
                        let v = non_finite(eval(init, &s.env(c)))?;
                        s.delay_buffers[*slot] = DelayBuffer::filled(k, v);
                    }
                    SiteRule::Random { slot, seed } => {
                        s.rng_seeds[*slot] = seed_from_arg(non_finite(eval(seed, &s.env(c)))?);
                    }
                }
            }
        }
    }
    s.evaluate(c)?;
    Ok(s)
}

/// Advance one Euler step and re-evaluate all variables at the new time.
pub fn step(s: &mut SimState, c: &CompiledModel) -> Result<(), SimError> {
    let dt = s.spec.dt;
    let mut stock_next = Vec::with_capacity(s.stocks.len());
    let mut smooth_next = Vec::with_capacity(s.smooth_states.len());
    let mut delay_inputs = Vec::with_capacity(s.delay_buffers.len());
    {
        let env = s.env(c);
        for (id, rule) in c.sites.iter().enumerate() {
            match rule {
                SiteRule::Stock { slot, flow, .. } => {
                    stock_next.push((*slot, s.stocks[*slot] + dt * eval(flow, &env)));
                }
                SiteRule::Smooth { slot, input, time, .. } => {
                    let tau = eval(time, &env);
                    if tau.is_nan() || tau <= 0.0 {
                        return Err(SimError::NonPositiveSmoothTime {
                            variable: c.classified.state_sites[id].owner.canonical().to_string(),
                            time: s.t,
                            value: tau,
                        });
                    }
                    let cur = s.smooth_states[*slot];
                    smooth_next.push((*slot, cur + dt * (eval(input, &env) - cur) / tau));
                }
                SiteRule::Delay { slot, input, .. } => delay_inputs.push((*slot, eval(input, &env))),
                SiteRule::Random { .. } => {}
            }
        }
    }
    for (slot, v) in stock_next {
        s.stocks[slot] = v;
    }
    for (slot, v) in smooth_next {
        s.smooth_states[slot] = v;
    }
    for (slot, v) in delay_inputs {
        s.delay_buffers[slot].push(v);
    }
    s.step_index += 1;
    s.t = s.spec.time_at(s.step_index);
    s.evaluate(c)
}
