use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::SqlPair;
use crate::sql::parse;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub pairs: Vec<SqlPair>,
    pub rejected: Vec<Rejection>,
}

#[derive(Deserialize)]
struct Row {
    id: String,
    schema_id: String,
    reference_sql: String,
    candidate_sql: String,
    label: Value,
    #[serde(default)]
    provenance: Option<String>,
}

pub fn ingest(path: impl AsRef<Path>) -> Result<IngestReport, IngestError> {
    ingest_str(&std::fs::read_to_string(path)?)
}

/// Reads pair JSONL. Lines that are not pair objects are errors; pairs whose
/// label is not 0 or 1, or whose SQL does not parse, are rejected.
pub fn ingest_str(text: &str) -> Result<IngestReport, IngestError> {
    let mut pairs = Vec::new();
    let mut rejected = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(raw).map_err(|e| IngestError::Malformed { line, message: e.to_string() })?;
        if !ids.insert(row.id.clone()) {
            return Err(IngestError::DuplicateId { line, id: row.id });
        }
        let reject = |reason: String| Rejection { line, id: row.id.clone(), reason };
        let label = match row.label.as_u64() {
            Some(l @ (0 | 1)) => l as u8,
            _ => {
                rejected.push(reject(format!("label {} is not 0 or 1", row.label)));
                continue;
            }
        };
        if let Err(e) = parse(&row.reference_sql) {
            rejected.push(reject(format!("reference: {e}")));
            continue;
        }
        if let Err(e) = parse(&row.candidate_sql) {
            rejected.push(reject(format!("candidate: {e}")));
            continue;
        }
        pairs.push(SqlPair {
            id: row.id,
            schema_id: row.schema_id,
            reference_sql: row.reference_sql,
            candidate_sql: row.candidate_sql,
            label,
            provenance: row.provenance.unwrap_or_else(|| "ingested".into()),
        });
    }
    Ok(IngestReport { pairs, rejected })
}
