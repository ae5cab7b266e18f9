//! CSV for runs and comparison reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a written run back gives bit-identical values.

use thiserror::Error;

use crate::ast::{normalize_name, NameKey};
use crate::engine::{RunMeta, RunResult};
use crate::scenario::ComparisonReport;

pub const TIME_HEADER: &str = "Time";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// Column indices for `selected`, in model order. `None` means all.
pub fn select_columns(r: &RunResult, selected: Option<&[&str]>) -> Result<Vec<usize>, CsvError> {
    let Some(names) = selected else {
        return Ok((0..r.columns.len()).collect());
    };
    let mut idx = Vec::with_capacity(names.len());
    for n in names {
        let i = crate::scenario::resolve_column(r, n).ok_or_else(|| CsvError::UnknownVariable(n.to_string()))?;
        idx.push(i);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

pub fn write_csv(r: &RunResult, selected: Option<&[&str]>) -> Result<String, CsvError> {
    let cols = select_columns(r, selected)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![TIME_HEADER.to_string()];
    header.extend(cols.iter().map(|&i| r.columns[i].canonical().to_string()));
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for (t, row) in r.times.iter().zip(&r.rows) {
        rec.clear();
        rec.push(t.to_string());
        rec.extend(cols.iter().map(|&i| row[i].to_string()));
        w.write_record(&rec)?;
    }
    Ok(finish(w))
}

pub fn read_csv(text: &str) -> Result<RunResult, CsvError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rd.headers()?.clone();
    if header.get(0) != Some(TIME_HEADER) {
        return Err(CsvError::BadHeader(format!("first column must be {TIME_HEADER:?}")));
    }
    let columns: Vec<NameKey> = header
        .iter()
        .skip(1)
        .map(|h| normalize_name(h).map_err(|e| CsvError::BadHeader(e.to_string())))
        .collect::<Result<_, _>>()?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mut vals = rec.iter().map(|f| {
            f.trim().parse::<f64>().map_err(|e| CsvError::BadRow {
                row: n + 1,
                message: format!("{f:?}: {e}"),
            })
        });
        times.push(vals.next().transpose()?.unwrap_or(f64::NAN));
        rows.push(vals.collect::<Result<Vec<f64>, _>>()?);
    }
    Ok(RunResult {
        columns,
        times,
        rows,
        meta: RunMeta::default(),
    })
}

/// Metric table of a comparison, one row per (variable, run).
pub fn write_report_csv(report: &ComparisonReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variable",
        "run",
        "mean",
        "min",
        "max",
        "final",
        "peak_time",
        "delta_mean",
        "delta_min",
        "delta_max",
        "delta_final",
    ])
    .expect("in-memory write");
    for m in &report.metrics {
        let nums = [
            m.mean,
            m.min,
            m.max,
            m.final_value,
            m.peak_time,
            m.delta_mean,
            m.delta_min,
            m.delta_max,
            m.delta_final,
        ];
        let mut rec = vec![m.var.clone(), m.label.clone()];
        rec.extend(nums.iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

/// Fixed-width text rendering of a comparison's metric table.
pub fn format_report(report: &ComparisonReport) -> String {
    let mut out = format!("window {}..{}\n", report.window.0, report.window.1);
    let var_w = report.metrics.iter().map(|m| m.var.len()).max().unwrap_or(8).max(8);
    let run_w = report.labels.iter().map(String::len).max().unwrap_or(3).max(3);
    out.push_str(&format!(
        "{:var_w$}  {:run_w$}  {:>12}  {:>12}  {:>12}  {:>12}  {:>9}  {:>12}\n",
        "variable", "run", "mean", "min", "max", "final", "peak_t", "delta_mean"
    ));
    for m in &report.metrics {
        out.push_str(&format!(
            "{:var_w$}  {:run_w$}  {:>12.6}  {:>12.6}  {:>12.6}  {:>12.6}  {:>9.3}  {:>+12.6}\n",
            m.var, m.label, m.mean, m.min, m.max, m.final_value, m.peak_time, m.delta_mean
        ));
    }
    out
}
