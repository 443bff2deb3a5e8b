//! Outcome scores and per-token reward traces for policy optimisation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ex_reward, Database, ExGrade};
use crate::gmn::{encode_rot, AnyModel, GmnError};
use crate::matching::{astpm, relpm, rot_graph, FailureClass, ScoreError, Side, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::plan::Catalog;
use crate::sql::{tokenize, Token};
use crate::steprtm::{segment_cte, step_rewards};

pub const SYNTAX_PENALTY: f64 = -1.0;
pub const ROT_PENALTY: f64 = -0.6;
pub const DEFAULT_BETA_KL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Gmn,
    Relpm,
    Astpm,
    Ex,
}

impl std::str::FromStr for Scorer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gmn" => Ok(Scorer::Gmn),
            "relpm" => Ok(Scorer::Relpm),
            "astpm" => Ok(Scorer::Astpm),
            "ex" => Ok(Scorer::Ex),
            _ => Err(format!("unknown scorer {s}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RewardConfig {
    pub beta_kl: f64,
    pub scorer: Scorer,
    pub stepwise: bool,
    pub alpha: f64,
    pub beta_f: f64,
    pub model: Option<Arc<AnyModel>>,
    pub db: Option<Arc<Database>>,
}

impl RewardConfig {
    pub fn new(scorer: Scorer) -> Self {
        RewardConfig {
            beta_kl: DEFAULT_BETA_KL,
            scorer,
            stepwise: true,
            alpha: DEFAULT_ALPHA,
            beta_f: DEFAULT_BETA,
            model: None,
            db: None,
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.beta_kl >= 0.0) {
            return Err(RewardError::Config("beta_kl must be non-negative".into()));
        }
        match self.scorer {
            Scorer::Gmn if self.model.is_none() => Err(RewardError::Config("gmn scorer needs a checkpoint".into())),
            Scorer::Ex if self.db.is_none() => Err(RewardError::Config("ex scorer needs a database".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeClass {
    Ok,
    SyntaxError,
    RotError,
    ExecGraded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeScore {
    pub value: f64,
    pub class: OutcomeClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grade: Option<ExGrade>,
}

impl OutcomeScore {
    fn ok(value: f64) -> Self {
        OutcomeScore { value, class: OutcomeClass::Ok, grade: None }
    }

    fn failed(class: FailureClass) -> Self {
        match class {
            FailureClass::Syntax => OutcomeScore { value: SYNTAX_PENALTY, class: OutcomeClass::SyntaxError, grade: None },
            FailureClass::Rot => OutcomeScore { value: ROT_PENALTY, class: OutcomeClass::RotError, grade: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("token sequence does not match the generated SQL: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] GmnError),
}

fn map_matching(r: Result<f64, ScoreError>) -> Result<OutcomeScore, RewardError> {
    match r {
        Ok(v) => Ok(OutcomeScore::ok(v)),
        Err(e) if e.side == Side::Reference => Err(RewardError::Config(format!("reference query: {}", e.message))),
        Err(e) => Ok(OutcomeScore::failed(e.class)),
    }
}

/// −1 on a syntax error, −0.6 when the plan cannot be built, otherwise
/// `max(0, sim + 1)`.
pub fn gmnscore(gen_sql: &str, ref_sql: &str, catalog: &Catalog, model: &AnyModel) -> Result<OutcomeScore, RewardError> {
    let reference =
        rot_graph(ref_sql, catalog, Side::Reference).map_err(|e| RewardError::Config(format!("reference query: {}", e.message)))?;
    let generated = match rot_graph(gen_sql, catalog, Side::Generated) {
        Ok(g) => g,
        Err(e) => return Ok(OutcomeScore::failed(e.class)),
    };
    let d_pos = model.hyper().d_pos;
    let f = model.forward_pair(&encode_rot(&generated, d_pos), &encode_rot(&reference, d_pos))?;
    Ok(OutcomeScore::ok((f.similarity + 1.0).max(0.0)))
}

pub fn outcome(gen_sql: &str, ref_sql: &str, catalog: &Catalog, config: &RewardConfig) -> Result<OutcomeScore, RewardError> {
    config.validate()?;
    match config.scorer {
        Scorer::Gmn => gmnscore(gen_sql, ref_sql, catalog, config.model.as_deref().expect("validated")),
        Scorer::Relpm => map_matching(relpm(gen_sql, ref_sql, catalog, config.alpha, config.beta_f)),
        // a syntax tree exists whenever parsing succeeds, so no −0.6 branch
        Scorer::Astpm => map_matching(astpm(gen_sql, ref_sql, config.alpha, config.beta_f)),
        Scorer::Ex => {
            let db = config.db.as_deref().expect("validated");
            let r = ex_reward(gen_sql, ref_sql, db, catalog).map_err(|e| RewardError::Config(e.to_string()))?;
            Ok(OutcomeScore { value: r.value, class: OutcomeClass::ExecGraded, grade: Some(r.grade) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardTrace {
    pub rewards: Vec<f64>,
    pub eos: usize,
    pub subquery_ends: Vec<usize>,
    pub outcome: OutcomeScore,
    pub increments: Vec<f64>,
    /// Coverage after each subquery, for inspection.
    pub cumulative: Vec<f64>,
    /// `β · kl_t` per token.
    pub kl_terms: Vec<f64>,
}

impl RewardTrace {
    pub fn total(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

fn same_tokens(a: &[Token], b: &[Token]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.kind == y.kind && x.lexeme == y.lexeme)
}

/// Per-token rewards: `−β·kl_t` everywhere, StepRTM increments at the
/// closing token of each subquery of a CTE query, and the outcome at the
/// last token. A token that is both eos and a subquery end carries both
/// terms with a single KL penalty.
pub fn reward_trace(
    tokens: &[Token],
    gen_sql: &str,
    ref_sql: &str,
    catalog: &Catalog,
    config: &RewardConfig,
    kl: Option<&[f64]>,
) -> Result<RewardTrace, RewardError> {
    if tokens.is_empty() {
        return Err(RewardError::Mismatch("empty token sequence".into()));
    }
    if let Ok(expected) = tokenize(gen_sql) {
        if !same_tokens(tokens, &expected) {
            return Err(RewardError::Mismatch(format!("{} tokens given, {} in the SQL", tokens.len(), expected.len())));
        }
    }
    let n = tokens.len();
    if let Some(k) = kl {
        if k.len() != n {
            return Err(RewardError::Mismatch(format!("{} KL values for {n} tokens", k.len())));
        }
    }
    let score = outcome(gen_sql, ref_sql, catalog, config)?;
    let kl_terms: Vec<f64> = (0..n).map(|t| config.beta_kl * kl.map_or(0.0, |k| k[t])).collect();
    let mut rewards: Vec<f64> = kl_terms.iter().map(|p| -p).collect();
    let (mut subquery_ends, mut increments, mut cumulative) = (Vec::new(), Vec::new(), Vec::new());
    let decomposed = segment_cte(gen_sql).is_ok_and(|s| s.len() > 1);
    if config.stepwise && decomposed {
        let trace = match step_rewards(gen_sql, ref_sql, catalog, config.alpha) {
            Ok(t) => t,
            Err(e) if e.side == Side::Reference => return Err(RewardError::Config(format!("reference query: {}", e.message))),
            Err(e) => return Err(RewardError::Config(e.message)),
        };
        for s in &trace.steps {
            rewards[s.end_token] += s.increment;
            subquery_ends.push(s.end_token);
            increments.push(s.increment);
            cumulative.push(s.coverage);
        }
    }
    rewards[n - 1] += score.value;
    Ok(RewardTrace { rewards, eos: n - 1, subquery_ends, outcome: score, increments, cumulative, kl_terms })
}
