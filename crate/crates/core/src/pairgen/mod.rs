//! Labelled SQL pair datasets: ingestion of pair files and synthesis of
//! equivalent and non-equivalent pairs from seed queries.

mod ingest;
mod seeds;
mod strategy;
mod visit;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest, ingest_str, IngestError, IngestReport, Rejection};
pub use seeds::{synthesize_seeds, Seed};
pub use strategy::{augment, cte_rewrite, generate, Generator, Strategy, StrategySpec};

use crate::fixtures::ToySchema;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlPair {
    pub id: String,
    pub schema_id: String,
    pub reference_sql: String,
    pub candidate_sql: String,
    /// 1 when the statements are functionally equivalent.
    pub label: u8,
    #[serde(default = "ingested")]
    pub provenance: String,
}

fn ingested() -> String {
    "ingested".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AugmentError {
    #[error("strategy {0} is not applicable to this seed")]
    NotApplicable(String),
    #[error("seed does not plan: {0}")]
    InvalidSeed(String),
    #[error("rewrite left the query unchanged")]
    Unchanged,
    #[error("label not confirmed: {0}")]
    Unverified(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("n must be at least 1")]
    Empty,
    #[error("mix weights must be non-negative with a positive sum")]
    BadMix,
    #[error("insufficient applicable seeds for {generator}: needed {needed}, produced {produced}")]
    InsufficientSeeds { generator: String, needed: usize, produced: usize },
    #[error("no bundled schema {0}")]
    UnknownSchema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mix(pub Vec<(Generator, f64)>);

impl Default for Mix {
    /// Half equivalent pairs, split between IN expansion and CTE rewrites;
    /// the rest spread evenly over the six perturbations.
    fn default() -> Self {
        let mut v = vec![(Generator::from(Strategy::InClauseReplacement), 0.25), (Generator::CteRewrite, 0.25)];
        v.extend(Strategy::ALL[1..].iter().map(|&s| (Generator::from(s), 0.5 / 6.0)));
        Mix(v)
    }
}

impl Mix {
    pub fn only(g: impl Into<Generator>) -> Self {
        Mix(vec![(g.into(), 1.0)])
    }

    pub fn positive_share(&self) -> f64 {
        let total: f64 = self.0.iter().map(|(_, w)| w).sum();
        self.0.iter().filter(|(g, _)| g.label() == 1).map(|(_, w)| w).sum::<f64>() / total
    }

    /// Largest-remainder split of `n` over the weights.
    pub fn quotas(&self, n: usize) -> Result<Vec<usize>, DatasetError> {
        let total: f64 = self.0.iter().map(|(_, w)| w).sum();
        if self.0.is_empty() || self.0.iter().any(|(_, w)| !(*w >= 0.0)) || !(total > 0.0) {
            return Err(DatasetError::BadMix);
        }
        let exact: Vec<f64> = self.0.iter().map(|(_, w)| w / total * n as f64).collect();
        let mut q: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - q[b] as f64).total_cmp(&(exact[a] - q[a] as f64)).then(a.cmp(&b)));
        let short = n - q.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            q[i] += 1;
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub mix: Mix,
    pub n: usize,
    pub seed: u64,
    /// Verify labels by execution on the schema's database.
    pub verify: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { mix: Mix::default(), n: 2000, seed: 0, verify: true }
    }
}

fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    }
    h
}

/// Draws `config.n` pairs with per-generator counts fixed by the mix.
/// Output order and ids depend only on the inputs and `config.seed`.
pub fn build_dataset(seeds: &[Seed], schemas: &[ToySchema], config: &DatasetConfig) -> Result<Vec<SqlPair>, DatasetError> {
    if config.n == 0 {
        return Err(DatasetError::Empty);
    }
    let by_id: BTreeMap<&str, &ToySchema> = schemas.iter().map(|s| (s.id, s)).collect();
    for s in seeds {
        if !by_id.contains_key(s.schema_id.as_str()) {
            return Err(DatasetError::UnknownSchema(s.schema_id.clone()));
        }
    }
    let quotas = config.mix.quotas(config.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::with_capacity(config.n);
    for (gi, ((generator, _), &quota)) in config.mix.0.iter().zip(&quotas).enumerate() {
        if quota == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..seeds.len()).collect();
        order.shuffle(&mut rng);
        let mut produced = 0;
        'passes: for pass in 0..3u64 {
            for &si in &order {
                if produced == quota {
                    break 'passes;
                }
                let seed = &seeds[si];
                let schema = by_id[seed.schema_id.as_str()];
                let db = config.verify.then_some(&schema.db);
                let rs = mix_seed(&[config.seed, gi as u64, pass, si as u64]);
                let Ok(mut pair) = generate(&seed.sql, &schema.catalog, db, generator, rs) else { continue };
                if !seen.insert((pair.reference_sql.clone(), pair.candidate_sql.clone())) {
                    continue;
                }
                pair.schema_id = seed.schema_id.clone();
                out.push(pair);
                produced += 1;
            }
        }
        if produced < quota {
            return Err(DatasetError::InsufficientSeeds { generator: generator.tag().into(), needed: quota, produced });
        }
    }
    out.shuffle(&mut rng);
    for (i, p) in out.iter_mut().enumerate() {
        p.id = format!("pair-{:05}", i);
    }
    Ok(out)
}

/// Deterministic choice of `k` schema ids to hold out.
pub fn held_out_schemas(ids: &[&str], k: usize, seed: u64) -> Vec<String> {
    let mut v: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    v.sort();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v.truncate(k);
    v.sort();
    v
}

/// Splits pairs into (train, held out) by schema id.
pub fn split_by_schema(pairs: Vec<SqlPair>, held_out: &[String]) -> (Vec<SqlPair>, Vec<SqlPair>) {
    pairs.into_iter().partition(|p| !held_out.contains(&p.schema_id))
}

/// Seeds for every bundled schema, `per_schema` each.
pub fn default_seeds(schemas: &[ToySchema], per_schema: usize, seed: u64) -> Vec<Seed> {
    schemas.iter().enumerate().flat_map(|(i, s)| synthesize_seeds(s, per_schema, mix_seed(&[seed, i as u64]))).collect()
}

pub fn to_jsonl(pairs: &[SqlPair]) -> String {
    pairs.iter().map(|p| serde_json::to_string(p).expect("serializable") + "\n").collect()
}
