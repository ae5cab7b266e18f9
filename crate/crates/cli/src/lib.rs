//! The `stockflow` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 model or parse error, 3 the run
//! hit a non-finite value.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use stockflow_core::analyzer::{causes_tree, uses_tree};
use stockflow_core::csv_io::{format_report, write_csv, write_report_csv};
use stockflow_core::engine::SimError;
use stockflow_core::scenario::{compare, resolve_column, Scenario};
use stockflow_core::{
    compile_bundled, corpus, load_model, normalize_name, CompiledModel, ModelError, Overrides, RunResult, VarKind,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_MODEL: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "stockflow",
    version,
    about = "Check, run, sweep and compare stock-and-flow models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TreeKind {
    Causes,
    Uses,
}

#[derive(Debug, clap::Args)]
struct RunFlags {
    /// Override a constant, e.g. --set "HIRING DELAY=4"
    #[arg(long = "set", value_name = "NAME=V")]
    set: Vec<String>,
    /// Override a stock's initial value
    #[arg(long = "set-init", value_name = "STOCK=V")]
    set_init: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated variables to keep (default: all)
    #[arg(long, value_delimiter = ',')]
    vars: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and classify a model
    Check {
        /// Model file or bundled id
        model: String,
        #[arg(long, requires = "var")]
        tree: Option<TreeKind>,
        #[arg(long)]
        var: Option<String>,
        #[arg(long, default_value_t = 2)]
        depth: usize,
    },
    /// Simulate and write CSV
    Run {
        model: String,
        #[command(flatten)]
        flags: RunFlags,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run once per value of one constant
    Sweep {
        model: String,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        flags: RunFlags,
        /// Directory for the per-value CSV files
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare two runs over a time window
    Compare {
        model_a: String,
        model_b: String,
        #[arg(long = "set-a", value_name = "NAME=V")]
        set_a: Vec<String>,
        #[arg(long = "set-b", value_name = "NAME=V")]
        set_b: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        vars: Vec<String>,
        /// t0:t1
        #[arg(long)]
        window: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Start the HTTP API
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn model(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_MODEL,
            message: message.into(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = if e.is_runtime() { EXIT_RUNTIME } else { EXIT_MODEL };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Check {
            model,
            tree,
            var,
            depth,
        } => check(&model, tree.zip(var), depth, out, err),
        Command::Run { model, flags, output } => {
            let m = load(&model, err)?;
            let r = simulate(&m, &flags.set, &flags.set_init, flags.seed)?;
            report_warnings(&r, err);
            let vars = flags
                .vars
                .as_ref()
                .map(|v| v.iter().map(String::as_str).collect::<Vec<_>>());
            let csv = write_csv(&r, vars.as_deref()).map_err(|e| Failure::model(e.to_string()))?;
            emit(&csv, output.as_deref(), out)
        }
        Command::Sweep {
            model,
            param,
            values,
            flags,
            out_dir,
        } => sweep(&model, &param, &values, &flags, &out_dir, out, err),
        Command::Compare {
            model_a,
            model_b,
            set_a,
            set_b,
            seed,
            vars,
            window,
            output,
        } => {
            let window = window.as_deref().map(parse_window).transpose()?;
            let a = load(&model_a, err)?;
            let b = load(&model_b, err)?;
            let (la, lb) = if a.model_id() == b.model_id() {
                ("a".to_string(), "b".to_string())
            } else {
                (a.model_id().to_string(), b.model_id().to_string())
            };
            let ra = simulate(&a, &set_a, &[], seed)?;
            let rb = simulate(&b, &set_b, &[], seed)?;
            report_warnings(&ra, err);
            report_warnings(&rb, err);
            let runs = [
                (Scenario::new(la, a.model_id()), ra),
                (Scenario::new(lb, b.model_id()), rb),
            ];
            let names: Vec<&str> = vars.iter().map(String::as_str).collect();
            let report = compare(&runs, &names, window).map_err(|e| Failure::model(e.to_string()))?;
            write!(out, "{}", format_report(&report)).map_err(io_failure)?;
            if let Some(path) = output {
                fs::write(&path, write_report_csv(&report)).map_err(io_failure)?;
            }
            Ok(())
        }
        Command::Serve { port, bind } => {
            let port = stockflow_service::resolve_port(port).map_err(Failure::usage)?;
            let addr = SocketAddr::new(bind, port);
            let rt = tokio::runtime::Runtime::new().map_err(io_failure)?;
            let _ = writeln!(err, "listening on http://{addr}");
            rt.block_on(stockflow_service::serve(addr)).map_err(io_failure)
        }
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::usage(e.to_string())
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(io_failure),
        None => out.write_all(text.as_bytes()).map_err(io_failure),
    }
}

/// A model file path, or a bundled id when no such file exists.
fn load(spec: &str, err: &mut dyn Write) -> Result<CompiledModel, Failure> {
    let path = Path::new(spec);
    if !path.is_file() {
        return compile_bundled(spec).map_err(|_| {
            let ids: Vec<&str> = corpus::list_bundled().iter().map(|m| m.id).collect();
            Failure::model(format!(
                "{spec:?} is neither a file nor a bundled model ({})",
                ids.join(", ")
            ))
        });
    }
    let source = fs::read_to_string(path).map_err(|e| Failure::model(format!("{spec}: {e}")))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    load_model(&source, id).map_err(|e| {
        match &e {
            ModelError::Parse(errs) => {
                for pe in errs {
                    let _ = writeln!(err, "{spec}:{pe}");
                }
            }
            ModelError::Analysis(diags) => {
                for d in diags {
                    let _ = writeln!(err, "{spec}: {d}");
                }
            }
            ModelError::Compile(_) => {}
        }
        Failure::model(e.to_string())
    })
}

fn parse_assignment(raw: &str) -> Result<(String, f64), Failure> {
    let (name, value) = raw
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("expected NAME=VALUE, got {raw:?}")))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("{:?} is not a number in {raw:?}", value.trim())))?;
    if name.trim().is_empty() {
        return Err(Failure::usage(format!("missing name in {raw:?}")));
    }
    Ok((name.to_string(), v))
}

fn collect_overrides(m: &CompiledModel, set: &[String], set_init: &[String]) -> Result<Overrides, Failure> {
    let mut o = Overrides::new();
    for (list, want_stock) in [(set, false), (set_init, true)] {
        for raw in list {
            let (name, v) = parse_assignment(raw)?;
            let key = normalize_name(&name).map_err(|e| Failure::usage(e.to_string()))?;
            let kind = m
                .kind_of(&key)
                .ok_or_else(|| Failure::model(format!("unknown variable {:?}", name.trim())))?;
            let is_stock = kind == VarKind::Stock;
            if is_stock != want_stock {
                let flag = if want_stock { "--set-init" } else { "--set" };
                return Err(Failure::model(format!(
                    "{flag} cannot change {} variable {:?}",
                    kind.label(),
                    name.trim()
                )));
            }
            o.insert(key, v);
        }
    }
    Ok(o)
}

fn simulate(m: &CompiledModel, set: &[String], set_init: &[String], seed: u64) -> Result<RunResult, Failure> {
    let o = collect_overrides(m, set, set_init)?;
    Ok(m.simulate(&o, seed)?)
}

fn report_warnings(r: &RunResult, err: &mut dyn Write) {
    for w in &r.meta.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
}

fn parse_window(raw: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::usage(format!("window must be t0:t1, got {raw:?}"));
    let (a, b) = raw.split_once(':').ok_or_else(bad)?;
    let t0: f64 = a.trim().parse().map_err(|_| bad())?;
    let t1: f64 = b.trim().parse().map_err(|_| bad())?;
    if t0 > t1 {
        return Err(bad());
    }
    Ok((t0, t1))
}

fn check(
    spec: &str,
    tree: Option<(TreeKind, String)>,
    depth: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let m = load(spec, err)?;
    let c = &m.classified;
    let mut text = format!("model {}: {} variables\n", m.model_id(), m.names().len());
    for kind in [VarKind::Stock, VarKind::Auxiliary, VarKind::Constant, VarKind::Control] {
        let names: Vec<&str> = m
            .names()
            .iter()
            .filter(|n| m.kind_of(n) == Some(kind))
            .map(|n| n.canonical())
            .collect();
        text.push_str(&format!(
            "  {:<10} {:>2}  {}\n",
            kind.label(),
            names.len(),
            names.join(", ")
        ));
    }
    let flows: Vec<&str> = m
        .names()
        .iter()
        .filter(|n| c.is_flow(n))
        .map(|n| n.canonical())
        .collect();
    text.push_str(&format!("  flows         {}\n", flows.join(", ")));
    for w in &c.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    if let Some((kind, var)) = tree {
        let t = match kind {
            TreeKind::Causes => causes_tree(c, &var, depth),
            TreeKind::Uses => uses_tree(c, &var, depth),
        }
        .map_err(|e| Failure::model(e.to_string()))?;
        text.push('\n');
        text.push_str(&t.to_string());
    }
    out.write_all(text.as_bytes()).map_err(io_failure)
}

fn file_slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn sweep(
    spec: &str,
    param: &str,
    values: &[f64],
    flags: &RunFlags,
    out_dir: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    use stockflow_core::par::{map_ordered, Execution};

    let m = load(spec, err)?;
    let key = normalize_name(param).map_err(|e| Failure::usage(e.to_string()))?;
    match m.kind_of(&key) {
        None => return Err(Failure::model(format!("unknown variable {param:?}"))),
        Some(VarKind::Auxiliary) => {
            return Err(Failure::model(format!(
                "{param:?} is an auxiliary; sweep a constant or stock"
            )))
        }
        Some(_) => {}
    }
    let mut base = collect_overrides(&m, &flags.set, &flags.set_init)?;
    base.remove(&key);
    let runs = map_ordered(values, Execution::Parallel, |v| {
        let mut o = base.clone();
        o.insert(key.clone(), *v);
        m.simulate(&o, flags.seed)
    });
    let runs: Vec<RunResult> = runs.into_iter().collect::<Result<_, _>>()?;

    let vars: Vec<&str> = match &flags.vars {
        Some(v) => v.iter().map(String::as_str).collect(),
        None => m
            .names()
            .iter()
            .filter(|n| m.kind_of(n) == Some(VarKind::Stock))
            .map(|n| n.canonical())
            .collect(),
    };
    fs::create_dir_all(out_dir).map_err(io_failure)?;
    let mut table = format!(
        "{:>12}  {:<32}  {:>14}  {:>14}  {:>14}  {:>14}\n",
        key.canonical(),
        "variable",
        "mean",
        "min",
        "max",
        "final"
    );
    for (v, r) in values.iter().zip(&runs) {
        report_warnings(r, err);
        let csv =
            write_csv(r, flags.vars.as_ref().map(|_| vars.as_slice())).map_err(|e| Failure::model(e.to_string()))?;
        let path = out_dir.join(format!(
            "{}_{}_{}.csv",
            file_slug(m.model_id()),
            file_slug(key.key()),
            v
        ));
        fs::write(&path, csv).map_err(io_failure)?;
        for var in &vars {
            let col = resolve_column(r, var).ok_or_else(|| Failure::model(format!("unknown variable {var:?}")))?;
            let series: Vec<f64> = r.rows.iter().map(|row| row[col]).collect();
            let mean = series.iter().sum::<f64>() / series.len() as f64;
            let min = series.iter().copied().fold(f64::INFINITY, f64::min);
            let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            table.push_str(&format!(
                "{:>12}  {:<32}  {:>14.6}  {:>14.6}  {:>14.6}  {:>14.6}\n",
                v,
                r.columns[col].canonical(),
                mean,
                min,
                max,
                series[series.len() - 1]
            ));
        }
    }
    out.write_all(table.as_bytes()).map_err(io_failure)
}
