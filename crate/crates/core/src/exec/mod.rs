//! In-memory executor for the supported SELECT subset, plus the graded
//! execution reward.

mod database;
mod engine;
mod value;

use std::cmp::Ordering;

use serde::Serialize;

pub use database::{Database, DatabaseError};
pub use engine::like;
pub use value::Value;

use crate::plan::{lower, Catalog, Rel};
use crate::sql::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecErrorClass {
    Syntax,
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{} error: {message}", match class { ExecErrorClass::Syntax => "syntax", ExecErrorClass::Runtime => "runtime" })]
pub struct ExecError {
    pub class: ExecErrorClass,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRelation {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// True iff the outermost query has ORDER BY.
    pub ordered: bool,
}

pub fn execute(sql: &str, db: &Database, catalog: &Catalog) -> Result<ResultRelation, ExecError> {
    let q = parse(sql).map_err(|e| ExecError { class: ExecErrorClass::Syntax, message: e.to_string() })?;
    let rel = lower(&q, catalog).map_err(|e| ExecError { class: ExecErrorClass::Runtime, message: e.message })?;
    let mut out = execute_rel(&rel, db)?;
    out.ordered = !q.order_by.is_empty();
    Ok(out)
}

/// Runs an operator tree directly; the result is reported unordered.
pub fn execute_rel(rel: &Rel, db: &Database) -> Result<ResultRelation, ExecError> {
    let rows = engine::run(rel, db)?;
    Ok(ResultRelation { columns: rel.fields().iter().map(|f| f.name.clone()).collect(), rows: rows.rows, ordered: false })
}

pub const REAL_TOLERANCE: f64 = 1e-6;

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Integer(x), Value::Integer(y)) => x == y,
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Real(_), Value::Integer(_) | Value::Real(_)) | (Value::Integer(_), Value::Real(_)) => {
            let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
            x == y || (x - y).abs() <= REAL_TOLERANCE * x.abs().max(y.abs())
        }
        _ => false,
    }
}

fn rows_equal(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_equal(x, y))
}

fn row_cmp(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

pub fn results_equal(a: &ResultRelation, b: &ResultRelation) -> bool {
    if a.rows.len() != b.rows.len() {
        return false;
    }
    if a.ordered && b.ordered {
        return a.rows.iter().zip(&b.rows).all(|(x, y)| rows_equal(x, y));
    }
    let mut x: Vec<&Vec<Value>> = a.rows.iter().collect();
    let mut y: Vec<&Vec<Value>> = b.rows.iter().collect();
    x.sort_by(|p, q| row_cmp(p, q));
    y.sort_by(|p, q| row_cmp(p, q));
    x.iter().zip(&y).all(|(p, q)| rows_equal(p, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExGrade {
    Correct,
    Incorrect,
    RuntimeError,
    SyntaxError,
}

impl ExGrade {
    pub fn value(self) -> f64 {
        match self {
            ExGrade::Correct => 1.0,
            ExGrade::Incorrect => -0.3,
            ExGrade::RuntimeError => -0.6,
            ExGrade::SyntaxError => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExReward {
    pub grade: ExGrade,
    pub value: f64,
    pub detail: String,
}

/// The reference query failed; this is a configuration problem, not a grade.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("reference query failed: {0}")]
pub struct ReferenceError(pub ExecError);

pub fn ex_reward(gen_sql: &str, ref_sql: &str, db: &Database, catalog: &Catalog) -> Result<ExReward, ReferenceError> {
    let reference = execute(ref_sql, db, catalog).map_err(ReferenceError)?;
    let (grade, detail) = match execute(gen_sql, db, catalog) {
        Err(e) if e.class == ExecErrorClass::Syntax => (ExGrade::SyntaxError, e.message),
        Err(e) => (ExGrade::RuntimeError, e.message),
        Ok(r) if results_equal(&r, &reference) => (ExGrade::Correct, format!("{} rows match", r.rows.len())),
        Ok(r) => (ExGrade::Incorrect, format!("{} rows vs {} expected", r.rows.len(), reference.rows.len())),
    };
    Ok(ExReward { grade, value: grade.value(), detail })
}
