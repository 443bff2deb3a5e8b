//! RelPM and AstPM: partial matching over operator trees and syntax trees.

use serde::Serialize;

use super::{partial_match, LabeledTree, MatchReport};
use crate::plan::{plan_sql, rot_as_tree, Catalog, PlanError, RotGraph};
use crate::sql::{ast_as_tree, parse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Generated,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    Syntax,
    Rot,
}

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{side:?} query: {message}")]
pub struct ScoreError {
    pub side: Side,
    pub class: FailureClass,
    pub message: String,
}

impl ScoreError {
    fn from_plan(side: Side, e: PlanError) -> Self {
        match e {
            PlanError::Syntax(p) => ScoreError { side, class: FailureClass::Syntax, message: p.to_string() },
            PlanError::Rot(r) => ScoreError { side, class: FailureClass::Rot, message: r.message },
        }
    }
}

/// Planned and normalized operator graph for one side of a comparison.
pub fn rot_graph(sql: &str, catalog: &Catalog, side: Side) -> Result<RotGraph, ScoreError> {
    plan_sql(sql, catalog).map(|r| RotGraph::from_rel(&r)).map_err(|e| ScoreError::from_plan(side, e))
}

fn ast_tree(sql: &str, side: Side) -> Result<LabeledTree, ScoreError> {
    parse(sql)
        .map(|q| ast_as_tree(&q))
        .map_err(|e| ScoreError { side, class: FailureClass::Syntax, message: e.to_string() })
}

pub fn relpm_report(
    gen_sql: &str,
    ref_sql: &str,
    catalog: &Catalog,
    alpha: f64,
    beta: f64,
) -> Result<MatchReport, ScoreError> {
    let r = rot_as_tree(&rot_graph(ref_sql, catalog, Side::Reference)?);
    let g = rot_as_tree(&rot_graph(gen_sql, catalog, Side::Generated)?);
    Ok(partial_match(&g, &r, alpha, beta))
}

pub fn relpm(gen_sql: &str, ref_sql: &str, catalog: &Catalog, alpha: f64, beta: f64) -> Result<f64, ScoreError> {
    relpm_report(gen_sql, ref_sql, catalog, alpha, beta).map(|m| m.f_beta)
}

pub fn astpm_report(gen_sql: &str, ref_sql: &str, alpha: f64, beta: f64) -> Result<MatchReport, ScoreError> {
    let r = ast_tree(ref_sql, Side::Reference)?;
    let g = ast_tree(gen_sql, Side::Generated)?;
    Ok(partial_match(&g, &r, alpha, beta))
}

pub fn astpm(gen_sql: &str, ref_sql: &str, alpha: f64, beta: f64) -> Result<f64, ScoreError> {
    astpm_report(gen_sql, ref_sql, alpha, beta).map(|m| m.f_beta)
}
