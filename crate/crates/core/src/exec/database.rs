//! Toy databases loaded from JSON.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value as Json;

use super::value::Value;
use crate::plan::{Catalog, ColumnType};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DatabaseError {
    #[error("malformed database document: {0}")]
    Malformed(String),
    #[error("table {0} is not in the catalog")]
    UnknownTable(String),
    #[error("table {0} is missing from the database")]
    MissingTable(String),
    #[error("table {table}: column list does not match the catalog")]
    ColumnMismatch { table: String },
    #[error("table {table} row {row}: expected {expected} values, found {found}")]
    Arity { table: String, row: usize, expected: usize, found: usize },
    #[error("table {table} row {row} column {column}: value does not match type {ty}")]
    Type { table: String, row: usize, column: String, ty: &'static str },
}

#[derive(Deserialize)]
struct DocTable {
    columns: Vec<String>,
    rows: Vec<Vec<Json>>,
}

#[derive(Deserialize)]
struct Doc {
    tables: BTreeMap<String, DocTable>,
}

/// Row stores keyed by lowercase table name, columns in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    tables: BTreeMap<String, Vec<Vec<Value>>>,
}

impl Database {
    pub fn from_json(text: &str, catalog: &Catalog) -> Result<Database, DatabaseError> {
        let doc: Doc = serde_json::from_str(text).map_err(|e| DatabaseError::Malformed(e.to_string()))?;
        let mut tables = BTreeMap::new();
        for (name, t) in doc.tables {
            let name = name.to_lowercase();
            let schema = catalog.table(&name).ok_or_else(|| DatabaseError::UnknownTable(name.clone()))?;
            // column order in the document may differ from the catalog
            let mut order = Vec::with_capacity(schema.columns.len());
            if t.columns.len() != schema.columns.len() {
                return Err(DatabaseError::ColumnMismatch { table: name });
            }
            for c in &schema.columns {
                match t.columns.iter().position(|x| x.to_lowercase() == c.name) {
                    Some(p) => order.push(p),
                    None => return Err(DatabaseError::ColumnMismatch { table: name }),
                }
            }
            let mut rows = Vec::with_capacity(t.rows.len());
            for (ri, raw) in t.rows.iter().enumerate() {
                if raw.len() != order.len() {
                    return Err(DatabaseError::Arity { table: name, row: ri, expected: order.len(), found: raw.len() });
                }
                let mut row = Vec::with_capacity(order.len());
                for (ci, &p) in order.iter().enumerate() {
                    let col = &schema.columns[ci];
                    let v = match (&raw[p], col.ty) {
                        (Json::Null, _) => Value::Null,
                        (Json::Number(n), ColumnType::Number) => match n.as_i64() {
                            Some(i) => Value::Integer(i),
                            None => Value::Real(n.as_f64().unwrap_or(f64::NAN)),
                        },
                        (Json::String(s), ColumnType::Text) => Value::Text(s.clone()),
                        _ => {
                            return Err(DatabaseError::Type {
                                table: name,
                                row: ri,
                                column: col.name.clone(),
                                ty: if col.ty == ColumnType::Number { "number" } else { "text" },
                            })
                        }
                    };
                    row.push(v);
                }
                rows.push(row);
            }
            tables.insert(name, rows);
        }
        for t in &catalog.tables {
            if !tables.contains_key(&t.name) {
                return Err(DatabaseError::MissingTable(t.name.clone()));
            }
        }
        Ok(Database { tables })
    }

    pub fn rows(&self, table: &str) -> Option<&[Vec<Value>]> {
        self.tables.get(table).map(|v| v.as_slice())
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(|s| s.as_str())
    }

    pub fn to_json(&self, catalog: &Catalog) -> String {
        let mut out = serde_json::Map::new();
        for (name, rows) in &self.tables {
            let cols: Vec<String> = catalog.table(name).map(|t| t.columns.iter().map(|c| c.name.clone()).collect()).unwrap_or_default();
            out.insert(name.clone(), serde_json::json!({ "columns": cols, "rows": rows }));
        }
        serde_json::json!({ "tables": out }).to_string()
    }
}
