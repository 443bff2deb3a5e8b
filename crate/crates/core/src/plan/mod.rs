//! Name resolution, lowering to operator trees, normalization and graph
//! export.

mod catalog;
mod encode;
mod graph;
mod lower;
mod normalize;
mod rel;

pub use catalog::{load_catalog, Catalog, CatalogError, Column, ColumnType, ForeignKey, Table};
pub use encode::{
    fnv1a, position_code, rot_as_graph, GraphDescriptor, LiteralType, NodeDescriptor, ATTR_BUCKETS, DEFAULT_POSITION_DIM,
    LITERAL_BUCKETS, MAX_POSITION_DEPTH,
};
pub use graph::{rot_as_tree, EdgeKind, RotGraph, RotNode, NODE_KINDS};
pub use lower::lower;
pub use normalize::normalize;
pub use rel::*;

use serde::Serialize;
use thiserror::Error;

use crate::sql::{parse, ParseError};

/// Failure to turn SQL text into a plan.
#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum PlanError {
    #[error("syntax error: {0}")]
    Syntax(ParseError),
    #[error("{0}")]
    Rot(RotError),
}

/// Parse, lower and normalize.
pub fn plan_sql(sql: &str, catalog: &Catalog) -> Result<Rel, PlanError> {
    let ast = parse(sql).map_err(PlanError::Syntax)?;
    let rel = lower(&ast, catalog).map_err(PlanError::Rot)?;
    Ok(normalize(&rel))
}
