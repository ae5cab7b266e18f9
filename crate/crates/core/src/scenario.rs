//! Named runs, one-parameter sweeps and multi-run comparison.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::analyzer::VarKind;
use crate::ast::{normalize_name, NameKey};
use crate::corpus::{self, UnknownModel};
use crate::engine::{CompiledModel, Overrides, RunResult, SimError};
use crate::par::{map_ordered, Execution};
use crate::{load_model, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    UnknownModel(#[from] UnknownModel),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("sweep parameter {0:?} must be a constant or a stock")]
    BadSweepParam(String),
    #[error("sweep needs at least one value")]
    EmptySweep,
    #[error("comparison needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("run label {0:?} is empty or repeated")]
    BadLabel(String),
    #[error("run {0:?} has a different time grid")]
    GridMismatch(String),
    #[error("window {0}..{1} contains no saved rows")]
    EmptyWindow(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub label: String,
    pub model_id: String,
    pub overrides: Overrides,
    pub seed: u64,
}

impl Scenario {
    pub fn new(label: impl Into<String>, model_id: impl Into<String>) -> Self {
        Scenario {
            label: label.into(),
            model_id: model_id.into(),
            overrides: Overrides::new(),
            seed: 0,
        }
    }

    /// Builder-style override; panics on an empty name.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.overrides
            .insert(normalize_name(name).expect("override name"), value);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Compiled models by id. Compiled plans are immutable and shared.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    models: HashMap<String, Arc<CompiledModel>>,
}

impl Registry {
    /// Registry preloaded with the bundled models.
    pub fn with_bundled() -> Self {
        let mut r = Registry::default();
        for m in corpus::list_bundled() {
            let compiled = load_model(m.source, m.id).expect("bundled models compile");
            r.insert(compiled);
        }
        r
    }

    pub fn insert(&mut self, model: CompiledModel) -> Arc<CompiledModel> {
        let id = model.model_id().to_string();
        let arc = Arc::new(model);
        self.models.insert(id, arc.clone());
        arc
    }

    pub fn add_source(&mut self, source: &str, id: &str) -> Result<Arc<CompiledModel>, ModelError> {
        Ok(self.insert(load_model(source, id)?))
    }

    pub fn get(&self, id: &str) -> Result<Arc<CompiledModel>, UnknownModel> {
        self.models.get(id).cloned().ok_or_else(|| UnknownModel(id.to_string()))
    }

    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.models.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }
}

pub fn run_scenario(reg: &Registry, s: &Scenario) -> Result<RunResult, ScenarioError> {
    let model = reg.get(&s.model_id)?;
    let mut result = model.simulate(&s.overrides, s.seed)?;
    result.meta.label = Some(s.label.clone());
    Ok(result)
}

/// Run several scenarios; results keep the input order.
pub fn run_all(reg: &Registry, scenarios: &[Scenario], exec: Execution) -> Vec<Result<RunResult, ScenarioError>> {
    map_ordered(scenarios, exec, |s| run_scenario(reg, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    pub param: NameKey,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn scenarios(&self) -> Vec<Scenario> {
        self.values
            .iter()
            .map(|v| {
                let mut s = self.base.clone();
                s.label = format!("{}={}", self.param.canonical(), v);
                s.overrides.insert(self.param.clone(), *v);
                s
            })
            .collect()
    }
}

pub fn sweep(reg: &Registry, spec: &SweepSpec) -> Result<Vec<(f64, RunResult)>, ScenarioError> {
    sweep_with(reg, spec, Execution::default())
}

pub fn sweep_with(reg: &Registry, spec: &SweepSpec, exec: Execution) -> Result<Vec<(f64, RunResult)>, ScenarioError> {
    if spec.values.is_empty() {
        return Err(ScenarioError::EmptySweep);
    }
    let model = reg.get(&spec.base.model_id)?;
    match model.kind_of(&spec.param) {
        None => return Err(ScenarioError::UnknownVariable(spec.param.canonical().to_string())),
        Some(VarKind::Auxiliary) => return Err(ScenarioError::BadSweepParam(spec.param.canonical().to_string())),
        Some(_) => {}
    }
    let runs = run_all(reg, &spec.scenarios(), exec);
    spec.values.iter().zip(runs).map(|(v, r)| r.map(|r| (*v, r))).collect()
}

fn singular_key(key: &str) -> String {
    key.split(' ')
        .map(|w| w.strip_suffix('s').filter(|s| !s.is_empty()).unwrap_or(w))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Locate `name` among a run's columns: exact normalized match first, then
/// a unique match ignoring a trailing plural `s` on each word.
pub fn resolve_column(run: &RunResult, name: &str) -> Option<usize> {
    let key = normalize_name(name).ok()?;
    if let Some(i) = run.columns.iter().position(|c| *c == key) {
        return Some(i);
    }
    let want = singular_key(key.key());
    let mut hits = run
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| singular_key(c.key()) == want);
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => Some(i),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub var: String,
    pub label: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub peak_time: f64,
    /// Differences from the first run's metrics.
    pub delta_mean: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarSeries {
    pub var: String,
    /// One series per run, aligned with `ComparisonReport::labels`.
    pub runs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub series: Vec<VarSeries>,
    pub metrics: Vec<MetricRow>,
}

struct Summary {
    mean: f64,
    min: f64,
    max: f64,
    last: f64,
    peak_time: f64,
}

fn summarize(times: &[f64], values: &[f64], rows: &[usize]) -> Summary {
    let mut s = Summary {
        mean: 0.0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        last: values[*rows.last().unwrap()],
        peak_time: times[rows[0]],
    };
    let mut sum = 0.0;
    for &r in rows {
        let v = values[r];
        sum += v;
        s.min = s.min.min(v);
        if v > s.max {
            s.max = v;
            s.peak_time = times[r];
        }
    }
    // Clamp guards min <= mean <= max against summation rounding.
    s.mean = (sum / rows.len() as f64).clamp(s.min, s.max);
    s
}

impl ComparisonReport {
    /// Indices of saved rows inside the window.
    pub fn window_rows(&self) -> Vec<usize> {
        let (w0, w1) = self.window;
        self.times
            .iter()
            .enumerate()
            .filter(|(_, t)| **t >= w0 - 1e-9 && **t <= w1 + 1e-9)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn metric(&self, var: &str, label: &str) -> Option<&MetricRow> {
        let key = normalize_name(var).ok()?;
        self.metrics
            .iter()
            .find(|m| normalize_name(&m.var).is_ok_and(|k| k == key) && m.label == label)
    }

    pub fn series_for(&self, var: &str, label: &str) -> Option<&[f64]> {
        let key = normalize_name(var).ok()?;
        let run = self.labels.iter().position(|l| l == label)?;
        self.series
            .iter()
            .find(|s| normalize_name(&s.var).is_ok_and(|k| k == key))
            .map(|s| s.runs[run].as_slice())
    }

    /// Fraction of window rows where run `b` is at least run `a`.
    pub fn fraction_at_least(&self, var: &str, a: &str, b: &str) -> Option<f64> {
        let (sa, sb) = (self.series_for(var, a)?, self.series_for(var, b)?);
        let rows = self.window_rows();
        let hits = rows.iter().filter(|&&r| sb[r] >= sa[r]).count();
        Some(hits as f64 / rows.len() as f64)
    }
}

/// Align runs and summarize `vars` over `window` (full horizon when `None`).
pub fn compare(
    runs: &[(Scenario, RunResult)],
    vars: &[&str],
    window: Option<(f64, f64)>,
) -> Result<ComparisonReport, ScenarioError> {
    if runs.len() < 2 {
        return Err(ScenarioError::TooFewRuns(runs.len()));
    }
    let mut labels: Vec<String> = Vec::new();
    for (s, _) in runs {
        if s.label.trim().is_empty() || labels.contains(&s.label) {
            return Err(ScenarioError::BadLabel(s.label.clone()));
        }
        labels.push(s.label.clone());
    }
    let times = runs[0].1.times.clone();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for (s, r) in &runs[1..] {
        if bits(&r.times) != bits(&times) {
            return Err(ScenarioError::GridMismatch(s.label.clone()));
        }
    }
    let window = window.unwrap_or((times[0], *times.last().unwrap()));
    let mut report = ComparisonReport {
        labels,
        window,
        times,
        series: Vec::new(),
        metrics: Vec::new(),
    };
    let rows = report.window_rows();
    if rows.is_empty() || window.0 > window.1 {
        return Err(ScenarioError::EmptyWindow(window.0, window.1));
    }

    for var in vars {
        let mut per_run = Vec::with_capacity(runs.len());
        for (_, r) in runs {
            let col = resolve_column(r, var).ok_or_else(|| ScenarioError::UnknownVariable(var.to_string()))?;
            per_run.push(r.rows.iter().map(|row| row[col]).collect::<Vec<f64>>());
        }
        let name = runs[0]
            .1
            .columns
            .get(resolve_column(&runs[0].1, var).unwrap())
            .map(|c| c.canonical().to_string())
            .unwrap_or_else(|| var.to_string());
        let summaries: Vec<Summary> = per_run
            .iter()
            .map(|vals| summarize(&report.times, vals, &rows))
            .collect();
        let base = &summaries[0];
        for (label, s) in report.labels.iter().zip(&summaries) {
            report.metrics.push(MetricRow {
                var: name.clone(),
                label: label.clone(),
                mean: s.mean,
                min: s.min,
                max: s.max,
                final_value: s.last,
                peak_time: s.peak_time,
                delta_mean: s.mean - base.mean,
                delta_min: s.min - base.min,
                delta_max: s.max - base.max,
                delta_final: s.last - base.last,
            });
        }
        report.series.push(VarSeries {
            var: name,
            runs: per_run,
        });
    }
    Ok(report)
}
