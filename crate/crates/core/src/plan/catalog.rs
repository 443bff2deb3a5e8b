use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Number,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    #[serde(default)]
    pub primary_key: Vec<String>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("malformed catalog: {0}")]
    Malformed(String),
    #[error("duplicate table {0}")]
    DuplicateTable(String),
    #[error("duplicate column {1} in table {0}")]
    DuplicateColumn(String, String),
    #[error("primary key column {1} not in table {0}")]
    BadPrimaryKey(String, String),
    #[error("foreign key {0}.{1} references missing {2}")]
    DanglingForeignKey(String, String, String),
}

/// Schema of one database. Table and column names are stored lowercased.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Catalog {
    pub tables: Vec<Table>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
struct Document {
    tables: Vec<Table>,
}

impl Catalog {
    pub fn new(mut tables: Vec<Table>) -> Result<Catalog, CatalogError> {
        for t in &mut tables {
            t.name = t.name.to_lowercase();
            for c in &mut t.columns {
                c.name = c.name.to_lowercase();
            }
            for k in &mut t.primary_key {
                *k = k.to_lowercase();
            }
            for fk in &mut t.foreign_keys {
                fk.column = fk.column.to_lowercase();
                fk.ref_table = fk.ref_table.to_lowercase();
                fk.ref_column = fk.ref_column.to_lowercase();
            }
        }
        let mut index = BTreeMap::new();
        for (i, t) in tables.iter().enumerate() {
            if t.name.is_empty() {
                return Err(CatalogError::Malformed("empty table name".into()));
            }
            if index.insert(t.name.clone(), i).is_some() {
                return Err(CatalogError::DuplicateTable(t.name.clone()));
            }
            let mut seen = BTreeSet::new();
            for c in &t.columns {
                if c.name.is_empty() {
                    return Err(CatalogError::Malformed(format!("empty column name in {}", t.name)));
                }
                if !seen.insert(c.name.as_str()) {
                    return Err(CatalogError::DuplicateColumn(t.name.clone(), c.name.clone()));
                }
            }
            for k in &t.primary_key {
                if !seen.contains(k.as_str()) {
                    return Err(CatalogError::BadPrimaryKey(t.name.clone(), k.clone()));
                }
            }
        }
        let cat = Catalog { tables, index };
        for t in &cat.tables {
            for fk in &t.foreign_keys {
                if t.column(&fk.column).is_none() {
                    return Err(CatalogError::DanglingForeignKey(t.name.clone(), fk.column.clone(), t.name.clone()));
                }
                let target = match cat.table(&fk.ref_table) {
                    Some(rt) if rt.column(&fk.ref_column).is_some() => continue,
                    Some(_) => format!("{}.{}", fk.ref_table, fk.ref_column),
                    None => fk.ref_table.clone(),
                };
                return Err(CatalogError::DanglingForeignKey(t.name.clone(), fk.column.clone(), target));
            }
        }
        Ok(cat)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.index.get(name).map(|&i| &self.tables[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "tables": self.tables })).expect("catalog serializes")
    }
}

pub fn load_catalog(document: &str) -> Result<Catalog, CatalogError> {
    let doc: Document = serde_json::from_str(document).map_err(|e| CatalogError::Malformed(e.to_string()))?;
    Catalog::new(doc.tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGER: &str = r#"{"tables":[
        {"name":"singer","columns":[{"name":"Singer_ID","type":"number"},{"name":"Name","type":"text"},
            {"name":"Birth_Year","type":"number"},{"name":"Net_Worth_Millions","type":"number"},{"name":"Citizenship","type":"text"}],
         "primary_key":["singer_id"]},
        {"name":"song","columns":[{"name":"Song_ID","type":"number"},{"name":"Title","type":"text"},{"name":"Singer_ID","type":"number"},
            {"name":"Sales","type":"number"},{"name":"Highest_Position","type":"number"}],
         "primary_key":["song_id"],
         "foreign_keys":[{"column":"singer_id","ref_table":"singer","ref_column":"singer_id"}]}]}"#;

    #[test]
    fn singer_song() {
        let c = load_catalog(SINGER).unwrap();
        assert_eq!(c.tables.len(), 2);
        let fks: usize = c.tables.iter().map(|t| t.foreign_keys.len()).sum();
        assert_eq!(fks, 1);
        assert_eq!(c.table("singer").unwrap().column("name").unwrap().ty, ColumnType::Text);
    }

    #[test]
    fn empty_catalog() {
        assert!(load_catalog(r#"{"tables":[]}"#).unwrap().tables.is_empty());
    }

    #[test]
    fn dangling_foreign_key_names_table() {
        let doc = r#"{"tables":[{"name":"a","columns":[{"name":"x","type":"number"}],
            "foreign_keys":[{"column":"x","ref_table":"ghost","ref_column":"id"}]}]}"#;
        let err = load_catalog(doc).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn duplicate_columns_rejected() {
        let doc = r#"{"tables":[{"name":"a","columns":[{"name":"x","type":"number"},{"name":"X","type":"text"}]}]}"#;
        assert!(matches!(load_catalog(doc), Err(CatalogError::DuplicateColumn(..))));
    }

    #[test]
    fn round_trip_json() {
        let c = load_catalog(SINGER).unwrap();
        assert_eq!(load_catalog(&c.to_json()).unwrap(), c);
    }
}
