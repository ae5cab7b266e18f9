//! Fixed-step Euler simulation with stateful builtins.
//!
//! Within a step, values saved at time `t` are computed from the state at
//! `t`; the flows evaluated there advance the state to `t + dt`.

pub mod builtins;
mod compile;
mod eval;
mod state;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{normalize_name, NameKey};

pub use compile::{compile, CompiledModel};
pub use state::{initialize, step, DelayBuffer, SimState};

/// Overrides of constants (including controls) and stock initial values.
pub type Overrides = BTreeMap<NameKey, f64>;

/// Build an override map from raw names.
pub fn overrides_from<'a, I: IntoIterator<Item = (&'a str, f64)>>(pairs: I) -> Result<Overrides, SimError> {
    pairs
        .into_iter()
        .map(|(k, v)| {
            normalize_name(k)
                .map(|n| (n, v))
                .map_err(|e| SimError::UnknownVariable(e.0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("control {0:?} must be a constant expression")]
    NonConstantControl(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("cannot override {name:?}: {reason}")]
    BadOverride { name: String, reason: String },
    #[error("{variable:?} is not finite at time {time}")]
    NonFinite { variable: String, time: f64 },
    #[error("SMOOTH time constant in {variable:?} is {value} at time {time}; it must be positive")]
    NonPositiveSmoothTime { variable: String, time: f64, value: f64 },
}

impl SimError {
    /// True for failures that happen while the model is running.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            SimError::NonFinite { .. } | SimError::NonPositiveSmoothTime { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub initial_time: f64,
    pub final_time: f64,
    pub dt: f64,
    pub saveper: f64,
    pub global_seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            initial_time: 0.0,
            final_time: 100.0,
            dt: 1.0,
            saveper: 1.0,
            global_seed: 0,
        }
    }
}

impl SimSpec {
    pub fn step_count(&self) -> u64 {
        ((self.final_time - self.initial_time) / self.dt).round() as u64
    }

    pub fn save_stride(&self) -> u64 {
        (self.saveper / self.dt).round() as u64
    }

    pub fn time_at(&self, step_index: u64) -> f64 {
        self.initial_time + step_index as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        let all_finite = [self.initial_time, self.final_time, self.dt, self.saveper]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("times must be finite".into());
        }
        if self.dt <= 0.0 {
            return bad(format!("TIME STEP must be positive, got {}", self.dt));
        }
        if self.final_time <= self.initial_time {
            return bad(format!(
                "FINAL TIME {} must exceed INITIAL TIME {}",
                self.final_time, self.initial_time
            ));
        }
        if self.step_count() < 1 {
            return bad("run must contain at least one step".into());
        }
        let stride = self.save_stride();
        if self.saveper <= 0.0 || stride < 1 || (stride as f64 * self.dt - self.saveper).abs() > 1e-9 * self.saveper {
            return bad(format!(
                "SAVEPER {} must be a positive multiple of TIME STEP {}",
                self.saveper, self.dt
            ));
        }
        if !self.step_count().is_multiple_of(stride) {
            return bad(format!(
                "run length {} is not a multiple of SAVEPER {}",
                self.final_time - self.initial_time,
                self.saveper
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunMeta {
    pub model_id: String,
    pub label: Option<String>,
    /// Canonical name and value, sorted by normalized name.
    pub overrides: Vec<(String, f64)>,
    pub seed: u64,
    pub spec: Option<SimSpec>,
    pub warnings: Vec<String>,
}

/// Saved rows of a run. `columns` are the model's variables in model
/// order; the time column is kept separately in `times`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub columns: Vec<NameKey>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub meta: RunMeta,
}

impl RunResult {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let key = normalize_name(name).ok()?;
        self.columns.iter().position(|c| *c == key)
    }

    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Value at the saved row whose time equals `t` (within 1e-9).
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let i = self.column_index(name)?;
        let row = self.times.iter().position(|x| (x - t).abs() <= 1e-9)?;
        Some(self.rows[row][i])
    }

    /// Same columns, times and bit-identical values.
    pub fn same_data(&self, other: &RunResult) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.columns == other.columns
            && bits(&self.times) == bits(&other.times)
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| bits(a) == bits(b))
    }
}

/// Initialize and run to the final time, saving every SAVEPER.
pub fn run(c: &CompiledModel, overrides: &Overrides, spec: &SimSpec) -> Result<RunResult, SimError> {
    let mut s = initialize(c, overrides, spec)?;
    let steps = spec.step_count();
    let stride = spec.save_stride();
    let mut times = Vec::with_capacity((steps / stride + 1) as usize);
    let mut rows = Vec::with_capacity(times.capacity());
    let positive_at_start: Vec<bool> = s.values.iter().map(|v| *v > 0.0).collect();
    let mut went_negative = vec![false; s.values.len()];
    let mut warnings = c.classified.warnings.clone();

    loop {
        for (i, v) in s.values.iter().enumerate() {
            if positive_at_start[i] && !went_negative[i] && *v < 0.0 {
                went_negative[i] = true;
                warnings.push(format!(
                    "{:?} turned negative at time {}",
                    c.names()[i].canonical(),
                    s.t
                ));
            }
        }
        if s.step_index % stride == 0 {
            times.push(s.t);
            rows.push(s.values.clone());
        }
        if s.step_index == steps {
            break;
        }
        step(&mut s, c)?;
    }
    warnings.extend(s.warnings);

    Ok(RunResult {
        columns: c.names().to_vec(),
        times,
        rows,
        meta: RunMeta {
            model_id: c.model_id().to_string(),
            label: None,
            overrides: overrides.iter().map(|(k, v)| (k.canonical().to_string(), *v)).collect(),
            seed: spec.global_seed,
            spec: Some(spec.clone()),
            warnings,
        },
    })
}

impl CompiledModel {
    /// Simulation spec implied by the model's control equations, with any
    /// control overrides applied.
    pub fn resolve_spec(&self, overrides: &Overrides, global_seed: u64) -> Result<SimSpec, SimError> {
        let (constants, _) = state::resolve_overrides(self, overrides)?;
        let vals = if constants.is_empty() {
            self.default_constants.clone()
        } else {
            self.eval_constants(&constants)?
        };
        let spec = self.spec_from_constants(&vals, global_seed);
        spec.validate()?;
        Ok(spec)
    }

    /// Run with the spec derived from the model and `overrides`.
    pub fn simulate(&self, overrides: &Overrides, global_seed: u64) -> Result<RunResult, SimError> {
        let spec = self.resolve_spec(overrides, global_seed)?;
        run(self, overrides, &spec)
    }
}
