//! Stock-and-flow models: a small equation language, dependency analysis,
//! fixed-step simulation, scenarios and CSV output.

pub mod analyzer;
pub mod ast;
pub mod corpus;
pub mod csv_io;
pub mod engine;
mod graph;
pub mod lang;
pub mod par;
pub mod scenario;

use thiserror::Error;

pub use analyzer::{classify, ClassifiedModel, Diagnostic, VarKind};
pub use ast::{normalize_name, ModelAst, NameKey};
pub use engine::{compile, CompiledModel, Overrides, RunResult, SimError, SimSpec};
pub use lang::{parse_model, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{} parse error(s); first: {}", .0.len(), .0[0])]
    Parse(Vec<ParseError>),
    #[error("{} analysis error(s); first: {}", .0.len(), .0[0])]
    Analysis(Vec<Diagnostic>),
    #[error(transparent)]
    Compile(#[from] SimError),
}

/// Parse, classify and compile model source.
pub fn load_model(source: &str, model_id: &str) -> Result<CompiledModel, ModelError> {
    let ast = parse_model(source, model_id).map_err(ModelError::Parse)?;
    let classified = classify(&ast).map_err(ModelError::Analysis)?;
    Ok(compile(&classified)?)
}

pub fn compile_bundled(id: &str) -> Result<CompiledModel, corpus::UnknownModel> {
    let m = corpus::bundled(id)?;
    Ok(load_model(m.source, m.id).expect("bundled models compile"))
}
