//! JSON API over the simulation core.
//!
//! Routes:
//! - `GET /api/models`: bundled models with slider metadata and variable kinds
//! - `POST /api/simulate`: one run
//! - `POST /api/compare`: several runs aligned and summarized
//!
//! Every request is self-contained. Bundled models are compiled once at
//! startup and shared read-only.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use stockflow_core::csv_io::select_columns;
use stockflow_core::engine::overrides_from;
use stockflow_core::scenario::{compare, Registry, Scenario, ScenarioError};
use stockflow_core::{corpus, load_model, CompiledModel, ModelError, RunResult, SimError, SimSpec};

pub const PORT_ENV: &str = "STOCKFLOW_PORT";
pub const DEFAULT_PORT: u16 = 8080;

/// Port from the flag, then `STOCKFLOW_PORT`, then 8080.
pub fn resolve_port(flag: Option<u16>) -> Result<u16, String> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{PORT_ENV}={v:?} is not a valid port")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

#[derive(Clone)]
pub struct AppState {
    registry: Arc<Registry>,
}

impl Default for AppState {
    fn default() -> Self {
        AppState {
            registry: Arc::new(Registry::with_bundled()),
        }
    }
}

pub fn router() -> Router {
    router_with(AppState::default())
}

pub fn router_with(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    Router::new()
        .route("/api/models", get(list_models))
        .route("/api/simulate", post(simulate))
        .route("/api/compare", post(compare_runs))
        .layer(cors)
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router()).await
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::Parse(errs) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "parse", msg)
                .with("errors", serde_json::to_value(errs).expect("serializable")),
            ModelError::Analysis(diags) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "analysis", msg)
                .with("errors", serde_json::to_value(diags).expect("serializable")),
            ModelError::Compile(e) => e.into(),
        }
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        let msg = e.to_string();
        match e {
            SimError::NonFinite { variable, time } | SimError::NonPositiveSmoothTime { variable, time, .. } => {
                ApiError::new(StatusCode::CONFLICT, "runtime", msg)
                    .with("variable", json!(variable))
                    .with("time", json!(time))
            }
            _ => ApiError::invalid(msg),
        }
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::UnknownModel(u) => ApiError::new(StatusCode::NOT_FOUND, "unknown_model", u.to_string()),
            ScenarioError::Sim(s) => s.into(),
            ScenarioError::GridMismatch(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "grid_mismatch", e.to_string())
            }
            other => ApiError::invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ById {
    id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BySource {
    source: String,
}

/// A bundled id or inline source. A bare string containing `=` or a line
/// break is taken as source.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ModelRef {
    Text(String),
    Id(ById),
    Source(BySource),
}

#[derive(Debug, Clone, Deserialize)]
pub struct SimulateRequest {
    model: ModelRef,
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    save_vars: Option<Vec<String>>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResponse {
    pub model_id: String,
    pub seed: u64,
    pub spec: Option<SimSpec>,
    pub time: Vec<f64>,
    pub series: IndexMap<String, Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct CompareRequest {
    runs: Vec<SimulateRequest>,
    #[serde(default)]
    vars: Vec<String>,
    #[serde(default)]
    window: Option<(f64, f64)>,
}

const INLINE_ID: &str = "inline";

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

impl AppState {
    fn resolve_model(&self, m: &ModelRef) -> Result<Arc<CompiledModel>, ApiError> {
        let source = match m {
            ModelRef::Text(s) if s.contains('=') || s.contains('\n') => s,
            ModelRef::Text(id) | ModelRef::Id(ById { id }) => {
                return self.registry.get(id).map_err(|e| ScenarioError::from(e).into());
            }
            ModelRef::Source(BySource { source }) => source,
        };
        Ok(Arc::new(load_model(source, INLINE_ID)?))
    }

    fn run(&self, req: &SimulateRequest) -> Result<(Arc<CompiledModel>, RunResult), ApiError> {
        let model = self.resolve_model(&req.model)?;
        let overrides = overrides_from(req.overrides.iter().map(|(k, v)| (k.as_str(), *v)))?;
        let mut result = model.simulate(&overrides, req.seed)?;
        result.meta.label = req.label.clone();
        Ok((model, result))
    }
}

fn to_response(r: &RunResult, save_vars: Option<&[String]>) -> Result<SimulateResponse, ApiError> {
    let names: Option<Vec<&str>> = save_vars.map(|v| v.iter().map(String::as_str).collect());
    let cols = select_columns(r, names.as_deref()).map_err(|e| ApiError::invalid(e.to_string()))?;
    let series = cols
        .iter()
        .map(|&i| {
            let values = r.rows.iter().map(|row| row[i]).collect();
            (r.columns[i].canonical().to_string(), values)
        })
        .collect();
    Ok(SimulateResponse {
        model_id: r.meta.model_id.clone(),
        seed: r.meta.seed,
        spec: r.meta.spec.clone(),
        time: r.times.clone(),
        series,
        warnings: r.meta.warnings.clone(),
    })
}

/// Run blocking simulation work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn list_models(State(state): State<AppState>) -> Json<Value> {
    let models: Vec<Value> = corpus::list_bundled()
        .iter()
        .map(|b| {
            let m = state.registry.get(b.id).expect("bundled model registered");
            let sliders: Vec<Value> = m
                .classified
                .ast
                .directives
                .iter()
                .map(|d| {
                    json!({
                        "name": d.target.canonical(),
                        "default": m.constant_value(&d.target),
                        "min": d.min,
                        "max": d.max,
                        "step": d.step,
                    })
                })
                .collect();
            let variables: Vec<Value> = m
                .names()
                .iter()
                .map(|n| {
                    json!({
                        "name": n.canonical(),
                        "kind": m.kind_of(n).expect("compiled variable").label(),
                        "flow": m.classified.is_flow(n),
                    })
                })
                .collect();
            json!({ "id": b.id, "description": b.description, "sliders": sliders, "variables": variables })
        })
        .collect();
    Json(Value::Array(models))
}

async fn simulate(State(state): State<AppState>, body: Bytes) -> Result<Json<SimulateResponse>, ApiError> {
    let req: SimulateRequest = parse_body(&body)?;
    blocking(move || {
        let (_, r) = state.run(&req)?;
        to_response(&r, req.save_vars.as_deref()).map(Json)
    })
    .await
}

async fn compare_runs(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: CompareRequest = parse_body(&body)?;
    if req.runs.len() < 2 {
        return Err(ScenarioError::TooFewRuns(req.runs.len()).into());
    }
    blocking(move || {
        let mut runs = Vec::with_capacity(req.runs.len());
        for (i, r) in req.runs.iter().enumerate() {
            let (model, result) = state.run(r)?;
            let label = r.label.clone().unwrap_or_else(|| format!("run {}", i + 1));
            let scenario = Scenario::new(label, model.model_id()).seed(r.seed);
            runs.push((scenario, result));
        }
        let vars: Vec<&str> = req.vars.iter().map(String::as_str).collect();
        let report = compare(&runs, &vars, req.window)?;
        Ok(Json(serde_json::to_value(report).expect("serializable")))
    })
    .await
}
