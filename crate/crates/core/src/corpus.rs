//! The two bundled quality-control models.

use serde::Serialize;
use thiserror::Error;

use crate::ast::ModelAst;
use crate::lang::parse_model;

pub const BASELINE_ID: &str = "pharma-baseline";
pub const IMPROVED_ID: &str = "pharma-improved";

#[derive(Debug, Clone, Serialize)]
pub struct BundledModel {
    pub id: &'static str,
    pub description: &'static str,
    pub source: &'static str,
}

static BUNDLED: [BundledModel; 2] = [
    BundledModel {
        id: BASELINE_ID,
        description: "Quality-control staffing with hiring driven by averaged customer complaints",
        source: include_str!("../../../models/pharma-baseline.sd"),
    },
    BundledModel {
        id: IMPROVED_ID,
        description: "Quality-control staffing with hiring driven by the averaged order rate",
        source: include_str!("../../../models/pharma-improved.sd"),
    },
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown bundled model {0:?}")]
pub struct UnknownModel(pub String);

pub fn list_bundled() -> &'static [BundledModel] {
    &BUNDLED
}

pub fn bundled(id: &str) -> Result<&'static BundledModel, UnknownModel> {
    BUNDLED
        .iter()
        .find(|m| m.id == id)
        .ok_or_else(|| UnknownModel(id.to_string()))
}

pub fn load_bundled(id: &str) -> Result<ModelAst, UnknownModel> {
    let m = bundled(id)?;
    Ok(parse_model(m.source, m.id).expect("bundled models parse"))
}
