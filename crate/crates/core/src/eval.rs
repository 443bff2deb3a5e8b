//! Schema-split pair sets and intrinsic AUC evaluation of outcome scorers.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Database;
use crate::fixtures::ToySchema;
use crate::gmn::{auc, encode_rot, AucError, LabeledPair};
use crate::matching::{rot_graph, Side};
use crate::pairgen::{build_dataset, default_seeds, held_out_schemas, DatasetConfig, DatasetError, SqlPair};
use crate::reward::{outcome, RewardConfig, RewardError, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub held_out: usize,
    pub seeds_per_schema: usize,
    pub n_train: usize,
    pub n_held_out: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { held_out: 3, seeds_per_schema: 300, n_train: 2000, n_held_out: 600, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub held_out_schemas: Vec<String>,
    pub train: Vec<SqlPair>,
    pub held_out: Vec<SqlPair>,
}

/// Seeds are synthesized per schema, then the schemas themselves are split so
/// no held-out pair shares a database with a training pair.
pub fn schema_split(schemas: &[ToySchema], config: &SplitConfig) -> Result<Split, DatasetError> {
    let ids: Vec<&str> = schemas.iter().map(|s| s.id).collect();
    let held = held_out_schemas(&ids, config.held_out, config.seed);
    let seeds = default_seeds(schemas, config.seeds_per_schema, config.seed);
    let (train_seeds, held_seeds): (Vec<_>, Vec<_>) = seeds.into_iter().partition(|s| !held.contains(&s.schema_id));
    let dataset = |seeds, n, seed| build_dataset(seeds, schemas, &DatasetConfig { n, seed, ..DatasetConfig::default() });
    let renumber = |mut pairs: Vec<SqlPair>, prefix: &str| {
        for (i, p) in pairs.iter_mut().enumerate() {
            p.id = format!("{prefix}-{i:05}");
        }
        pairs
    };
    let train = renumber(dataset(&train_seeds, config.n_train, config.seed)?, "train");
    let held_out = renumber(dataset(&held_seeds, config.n_held_out, config.seed.wrapping_add(1))?, "held");
    Ok(Split { held_out_schemas: held, train, held_out })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("pair {id} names unknown schema {schema}")]
    UnknownSchema { id: String, schema: String },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Auc(#[from] AucError),
}

fn lookup<'a>(schemas: &'a [ToySchema], p: &SqlPair) -> Result<&'a ToySchema, EvalError> {
    schemas
        .iter()
        .find(|s| s.id == p.schema_id)
        .ok_or_else(|| EvalError::UnknownSchema { id: p.id.clone(), schema: p.schema_id.clone() })
}

/// GMN training examples as (reference, candidate, equivalent). Pairs whose
/// candidate does not compile to a plan are skipped.
pub fn labeled_pairs(pairs: &[SqlPair], schemas: &[ToySchema], d_pos: usize) -> Result<Vec<LabeledPair>, EvalError> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let s = lookup(schemas, p)?;
        let Ok(r) = rot_graph(&p.reference_sql, &s.catalog, Side::Reference) else { continue };
        let Ok(c) = rot_graph(&p.candidate_sql, &s.catalog, Side::Generated) else { continue };
        out.push((encode_rot(&r, d_pos), encode_rot(&c, d_pos), p.label == 1));
    }
    Ok(out)
}

/// Outcome score of every candidate against its reference. Candidates
/// that fail to parse or plan get their penalty values, as they would
/// during policy optimisation.
pub fn outcome_scores(pairs: &[SqlPair], schemas: &[ToySchema], config: &RewardConfig) -> Result<Vec<f64>, EvalError> {
    let mut dbs: BTreeMap<&str, Arc<Database>> = BTreeMap::new();
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let s = lookup(schemas, p)?;
        let score = if config.scorer == Scorer::Ex {
            let db = dbs.entry(s.id).or_insert_with(|| Arc::new(s.db.clone())).clone();
            outcome(&p.candidate_sql, &p.reference_sql, &s.catalog, &RewardConfig { db: Some(db), ..config.clone() })?
        } else {
            outcome(&p.candidate_sql, &p.reference_sql, &s.catalog, config)?
        };
        out.push(score.value);
    }
    Ok(out)
}

pub fn scorer_auc(pairs: &[SqlPair], schemas: &[ToySchema], config: &RewardConfig) -> Result<f64, EvalError> {
    let scores = outcome_scores(pairs, schemas, config)?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.label == 1).collect();
    Ok(auc(&scores, &labels)?)
}
