//! Request/response documents of the NDJSON scoring protocol and a
//! transport-free handler for them.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::exec::{ex_reward, execute, Database};
use crate::fixtures::{toy_schemas, ToySchema};
use crate::gmn::AnyModel;
use crate::matching::{DEFAULT_ALPHA, DEFAULT_BETA};
use crate::plan::{plan_sql, Catalog, PlanError, RotGraph};
use crate::reward::{outcome, reward_trace, RewardConfig, RewardError, Scorer, DEFAULT_BETA_KL};
use crate::sql::{parse, print_canonical, tokenize, Token, TokenKind};
use crate::steprtm::step_rewards;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Parse,
    Plan,
    Score,
    Steps,
    RewardTrace,
    Ex,
    Exec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<Scorer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<String>,
    #[serde(default, rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<Vec<f64>>,
    /// Token lexemes of `gen`, as the policy emitted them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepwise: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub class: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl ScoreResponse {
    pub fn success(id: String, payload: Json) -> Self {
        ScoreResponse { id, ok: true, payload: Some(payload), error: None }
    }

    pub fn failure(id: String, class: &str, message: impl Into<String>) -> Self {
        ScoreResponse { id, ok: false, payload: None, error: Some(ErrorBody { class: class.into(), message: message.into() }) }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses serialize")
    }
}

#[derive(Debug, Clone)]
pub struct SchemaHandle {
    pub catalog: Catalog,
    pub db: Arc<Database>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub scorer: Scorer,
    pub alpha: f64,
    pub beta_f: f64,
    pub beta_kl: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults { scorer: Scorer::Relpm, alpha: DEFAULT_ALPHA, beta_f: DEFAULT_BETA, beta_kl: DEFAULT_BETA_KL }
    }
}

/// Read-only scoring state shared by every connection and worker.
#[derive(Debug, Clone, Default)]
pub struct Service {
    pub schemas: BTreeMap<String, Arc<SchemaHandle>>,
    pub model: Option<Arc<AnyModel>>,
    pub defaults: Defaults,
}

struct Failure(&'static str, String);

impl From<RewardError> for Failure {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::Config(m) => Failure("config", m),
            RewardError::Mismatch(m) => Failure("mismatch", m),
            RewardError::Model(m) => Failure("model", m.to_string()),
        }
    }
}

fn plan_failure(e: PlanError) -> Failure {
    match e {
        PlanError::Syntax(p) => Failure("syntax-error", p.to_string()),
        PlanError::Rot(r) => Failure("rot-error", r.to_string()),
    }
}

fn to_json<T: Serialize>(v: &T) -> Json {
    serde_json::to_value(v).expect("payloads serialize")
}

impl Service {
    pub fn with_toy_schemas() -> Self {
        let mut s = Service::default();
        for t in toy_schemas() {
            s.add_schema(t);
        }
        s
    }

    pub fn add_schema(&mut self, t: ToySchema) {
        self.schemas.insert(t.id.to_string(), Arc::new(SchemaHandle { catalog: t.catalog, db: Arc::new(t.db) }));
    }

    pub fn insert_schema(&mut self, id: impl Into<String>, catalog: Catalog, db: Database) {
        self.schemas.insert(id.into(), Arc::new(SchemaHandle { catalog, db: Arc::new(db) }));
    }

    pub fn config(&self, scorer: Option<Scorer>, schema: Option<&SchemaHandle>) -> RewardConfig {
        RewardConfig {
            beta_kl: self.defaults.beta_kl,
            scorer: scorer.unwrap_or(self.defaults.scorer),
            stepwise: true,
            alpha: self.defaults.alpha,
            beta_f: self.defaults.beta_f,
            model: self.model.clone(),
            db: schema.map(|s| s.db.clone()),
        }
    }

    /// One response per input line; unreadable lines get `synthetic_id`.
    pub fn handle_line(&self, line: &str, synthetic_id: &str) -> ScoreResponse {
        match serde_json::from_str::<ScoreRequest>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => {
                let id = serde_json::from_str::<Json>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Json::as_str).map(str::to_string))
                    .unwrap_or_else(|| synthetic_id.to_string());
                ScoreResponse::failure(id, "malformed-request", e.to_string())
            }
        }
    }

    pub fn handle(&self, req: &ScoreRequest) -> ScoreResponse {
        match self.dispatch(req) {
            Ok(p) => ScoreResponse::success(req.id.clone(), p),
            Err(Failure(class, message)) => ScoreResponse::failure(req.id.clone(), class, message),
        }
    }

    fn schema(&self, req: &ScoreRequest) -> Result<&SchemaHandle, Failure> {
        let id = req.schema.as_deref().ok_or_else(|| Failure("missing-field", "schema is required".into()))?;
        self.schemas.get(id).map(|s| s.as_ref()).ok_or_else(|| Failure("unknown-schema", format!("no schema {id}")))
    }

    fn dispatch(&self, req: &ScoreRequest) -> Result<Json, Failure> {
        let field = |v: &Option<String>, name: &str| v.clone().ok_or_else(|| Failure("missing-field", format!("{name} is required")));
        let gen = field(&req.gen, "gen")?;
        match req.op {
            Op::Parse => {
                let ast = parse(&gen).map_err(|e| Failure("syntax-error", e.to_string()))?;
                let tokens: Vec<String> = tokenize(&gen).map_err(|e| Failure("syntax-error", e.to_string()))?.into_iter().map(|t| t.lexeme).collect();
                Ok(json!({ "canonical": print_canonical(&ast), "tokens": tokens, "ast": to_json(&ast) }))
            }
            Op::Plan => {
                let s = self.schema(req)?;
                let rel = plan_sql(&gen, &s.catalog).map_err(plan_failure)?;
                let g = RotGraph::from_rel(&rel);
                Ok(json!({ "tree": g.render(), "graph": to_json(&g) }))
            }
            Op::Exec => {
                let s = self.schema(req)?;
                let r = execute(&gen, &s.db, &s.catalog).map_err(|e| Failure("exec-error", e.to_string()))?;
                Ok(to_json(&r))
            }
            Op::Score => {
                let s = self.schema(req)?;
                let reference = field(&req.reference, "ref")?;
                let o = outcome(&gen, &reference, &s.catalog, &self.config(req.scorer, Some(s)))?;
                let mut v = to_json(&o);
                v["score"] = json!(o.value);
                Ok(v)
            }
            Op::Ex => {
                let s = self.schema(req)?;
                let reference = field(&req.reference, "ref")?;
                let r = ex_reward(&gen, &reference, &s.db, &s.catalog).map_err(|e| Failure("config", e.to_string()))?;
                let mut v = to_json(&r);
                v["score"] = json!(r.value);
                Ok(v)
            }
            Op::Steps => {
                let s = self.schema(req)?;
                let reference = field(&req.reference, "ref")?;
                let t = step_rewards(&gen, &reference, &s.catalog, self.defaults.alpha).map_err(|e| match e.side {
                    crate::matching::Side::Reference => Failure("config", e.message),
                    crate::matching::Side::Generated => Failure("syntax-error", e.message),
                })?;
                Ok(to_json(&t))
            }
            Op::RewardTrace => {
                let s = self.schema(req)?;
                let reference = field(&req.reference, "ref")?;
                let tokens = match (&req.tokens, tokenize(&gen)) {
                    (None, Ok(t)) => t,
                    (None, Err(e)) => return Err(Failure("mismatch", format!("tokens are required when gen does not tokenize: {e}"))),
                    (Some(lex), Ok(t)) => {
                        if lex.len() != t.len() || lex.iter().zip(&t).any(|(a, b)| *a != b.lexeme) {
                            return Err(Failure("mismatch", "tokens do not match tokenize(gen)".into()));
                        }
                        t
                    }
                    (Some(lex), Err(_)) => lex
                        .iter()
                        .enumerate()
                        .map(|(index, l)| Token { kind: TokenKind::Identifier, lexeme: l.clone(), span: (0, 0), index })
                        .collect(),
                };
                let mut config = self.config(req.scorer, Some(s));
                config.stepwise = req.stepwise.unwrap_or(true);
                let t = reward_trace(&tokens, &gen, &reference, &s.catalog, &config, req.kl.as_deref())?;
                Ok(to_json(&t))
            }
        }
    }
}
