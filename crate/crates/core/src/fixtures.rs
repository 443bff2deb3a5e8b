//! Bundled toy schemas with small databases.

use crate::exec::Database;
use crate::plan::{load_catalog, Catalog};

const RAW: &[(&str, &str, &str)] = &[
    ("car", include_str!("../fixtures/toy/car.catalog.json"), include_str!("../fixtures/toy/car.db.json")),
    ("college", include_str!("../fixtures/toy/college.catalog.json"), include_str!("../fixtures/toy/college.db.json")),
    ("concert_singer", include_str!("../fixtures/toy/concert_singer.catalog.json"), include_str!("../fixtures/toy/concert_singer.db.json")),
    ("employee_hire", include_str!("../fixtures/toy/employee_hire.catalog.json"), include_str!("../fixtures/toy/employee_hire.db.json")),
    ("flight", include_str!("../fixtures/toy/flight.catalog.json"), include_str!("../fixtures/toy/flight.db.json")),
    ("forum", include_str!("../fixtures/toy/forum.catalog.json"), include_str!("../fixtures/toy/forum.db.json")),
    ("league", include_str!("../fixtures/toy/league.catalog.json"), include_str!("../fixtures/toy/league.db.json")),
    ("library", include_str!("../fixtures/toy/library.catalog.json"), include_str!("../fixtures/toy/library.db.json")),
    ("movie_rating", include_str!("../fixtures/toy/movie_rating.catalog.json"), include_str!("../fixtures/toy/movie_rating.db.json")),
    ("pets", include_str!("../fixtures/toy/pets.catalog.json"), include_str!("../fixtures/toy/pets.db.json")),
    ("singer", include_str!("../fixtures/toy/singer.catalog.json"), include_str!("../fixtures/toy/singer.db.json")),
    ("store", include_str!("../fixtures/toy/store.catalog.json"), include_str!("../fixtures/toy/store.db.json")),
    ("workshop", include_str!("../fixtures/toy/workshop.catalog.json"), include_str!("../fixtures/toy/workshop.db.json")),
];

#[derive(Debug, Clone)]
pub struct ToySchema {
    pub id: &'static str,
    pub catalog: Catalog,
    pub db: Database,
}

pub fn schema_ids() -> impl Iterator<Item = &'static str> {
    RAW.iter().map(|r| r.0)
}

pub fn toy_schema(id: &str) -> Option<ToySchema> {
    let (id, cat, db) = RAW.iter().find(|r| r.0 == id)?;
    let catalog = load_catalog(cat).expect("bundled catalog");
    let db = Database::from_json(db, &catalog).expect("bundled database");
    Some(ToySchema { id, catalog, db })
}

pub fn toy_schemas() -> Vec<ToySchema> {
    schema_ids().filter_map(toy_schema).collect()
}
