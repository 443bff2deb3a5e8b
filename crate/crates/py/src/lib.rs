//! Python module `rotscore_py`.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value as Json;

use rotscore::eval::{labeled_pairs, schema_split, SplitConfig};
use rotscore::exec::Database;
use rotscore::fixtures::{schema_ids as bundled_ids, toy_schemas};
use rotscore::gmn::{auc as auc_of, load_checkpoint, save_checkpoint, train, AnyModel, GmnModel, Hyperparams, Schedule, TrainConfig, TrainError};
use rotscore::plan::load_catalog;
use rotscore::pairgen::{ingest_str, SqlPair};
use rotscore::reward::Scorer;
use rotscore::service::{Defaults, Op, ScoreRequest, Service};

create_exception!(rotscore_py, RotscoreError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    RotscoreError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &Json) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Json::Null => py.None(),
        Json::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Json::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Json::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Json::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any().unbind()
        }
        Json::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn scorer(name: &str) -> PyResult<Scorer> {
    name.parse().map_err(PyValueError::new_err)
}

/// Trained or freshly initialised matching network.
#[pyclass(frozen, module = "rotscore_py")]
struct Model {
    inner: Arc<AnyModel>,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (seed = 0, precision = "f32"))]
    fn new(seed: u64, precision: &str) -> PyResult<Self> {
        let inner = match precision {
            "f32" => AnyModel::F32(GmnModel::new(Hyperparams::default(), seed)),
            "f64" => AnyModel::F64(GmnModel::new(Hyperparams::default(), seed)),
            _ => return Err(PyValueError::new_err("precision is f32 or f64")),
        };
        Ok(Model { inner: Arc::new(inner) })
    }

    #[staticmethod]
    fn from_checkpoint(text: &str) -> PyResult<Self> {
        Ok(Model { inner: Arc::new(load_checkpoint(text).map_err(err)?) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Model::from_checkpoint(&std::fs::read_to_string(path).map_err(err)?)
    }

    fn checkpoint(&self) -> String {
        match self.inner.as_ref() {
            AnyModel::F32(m) => save_checkpoint(m),
            AnyModel::F64(m) => save_checkpoint(m),
        }
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, self.checkpoint()).map_err(err)
    }

    #[getter]
    fn precision(&self) -> &'static str {
        match self.inner.as_ref() {
            AnyModel::F32(_) => "f32",
            AnyModel::F64(_) => "f64",
        }
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        match self.inner.as_ref() {
            AnyModel::F32(m) => m.parameter_count(),
            AnyModel::F64(m) => m.parameter_count(),
        }
    }

    /// Trains on JSON-lines pairs over the bundled schemas, or on a
    /// generated schema-split set when `pairs` is None. Returns the model
    /// and its per-epoch history.
    #[staticmethod]
    #[pyo3(signature = (pairs = None, epochs = 16, lr = 1e-3, seed = 0))]
    fn train(py: Python<'_>, pairs: Option<&str>, epochs: usize, lr: f64, seed: u64) -> PyResult<(Model, Py<PyAny>)> {
        let schemas = toy_schemas();
        let pairs: Vec<SqlPair> = match pairs {
            Some(text) => ingest_str(text).map_err(err)?.pairs,
            None => schema_split(&schemas, &SplitConfig { seed, ..SplitConfig::default() }).map_err(err)?.train,
        };
        let config = TrainConfig { epochs, seed, schedule: Schedule::Cosine { lr, min_lr: lr / 20.0 }, ..TrainConfig::default() };
        let result = py.detach(|| {
            let set = labeled_pairs(&pairs, &schemas, Hyperparams::default().d_pos).map_err(|e| e.to_string())?;
            match train(&GmnModel::<f32>::new(Hyperparams::default(), seed), &set, None, &config) {
                Ok(out) => Ok((out.model, out.history)),
                Err(TrainError::Diverged { last_good, history, .. }) => Ok((*last_good, history)),
                Err(e) => Err(e.to_string()),
            }
        });
        let (model, history) = result.map_err(RotscoreError::new_err)?;
        let history = to_py(py, &serde_json::to_value(&history).map_err(err)?)?;
        Ok((Model { inner: Arc::new(AnyModel::F32(model)) }, history))
    }
}

/// Scoring engine over the bundled schemas plus any added ones.
#[pyclass(frozen, module = "rotscore_py")]
struct Engine {
    service: Arc<Service>,
}

impl Engine {
    fn call(&self, py: Python<'_>, req: ScoreRequest) -> PyResult<Py<PyAny>> {
        let resp = py.detach(|| self.service.handle(&req));
        match (resp.payload, resp.error) {
            (Some(p), _) => to_py(py, &p),
            (None, Some(e)) => Err(RotscoreError::new_err(format!("{}: {}", e.class, e.message))),
            (None, None) => Ok(py.None()),
        }
    }

    fn request(op: Op, gen: &str, reference: Option<&str>, schema: Option<&str>) -> ScoreRequest {
        ScoreRequest {
            id: "py".into(),
            op,
            scorer: None,
            gen: Some(gen.into()),
            reference: reference.map(str::to_string),
            schema: schema.map(str::to_string),
            kl: None,
            tokens: None,
            stepwise: None,
        }
    }
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (scorer = "relpm", model = None, alpha = None, beta_f = None, beta_kl = None))]
    fn new(scorer: &str, model: Option<PyRef<'_, Model>>, alpha: Option<f64>, beta_f: Option<f64>, beta_kl: Option<f64>) -> PyResult<Self> {
        let mut service = Service::with_toy_schemas();
        let base = Defaults::default();
        service.defaults = Defaults {
            scorer: self::scorer(scorer)?,
            alpha: alpha.unwrap_or(base.alpha),
            beta_f: beta_f.unwrap_or(base.beta_f),
            beta_kl: beta_kl.unwrap_or(base.beta_kl),
        };
        service.model = model.map(|m| Arc::clone(&m.inner));
        if service.defaults.scorer == Scorer::Gmn && service.model.is_none() {
            return Err(PyValueError::new_err("the gmn scorer needs a model"));
        }
        Ok(Engine { service: Arc::new(service) })
    }

    /// Copy of this engine that also knows schema `id`.
    #[pyo3(signature = (id, catalog_json, db_json = None))]
    fn with_schema(&self, id: &str, catalog_json: &str, db_json: Option<&str>) -> PyResult<Engine> {
        let catalog = load_catalog(catalog_json).map_err(err)?;
        let db = Database::from_json(db_json.unwrap_or(r#"{"tables":{}}"#), &catalog).map_err(err)?;
        let mut service = (*self.service).clone();
        service.insert_schema(id, catalog, db);
        Ok(Engine { service: Arc::new(service) })
    }

    fn schemas(&self) -> Vec<String> {
        self.service.schemas.keys().cloned().collect()
    }

    fn parse(&self, py: Python<'_>, sql: &str) -> PyResult<Py<PyAny>> {
        self.call(py, Engine::request(Op::Parse, sql, None, None))
    }

    fn plan(&self, py: Python<'_>, sql: &str, schema: &str) -> PyResult<Py<PyAny>> {
        self.call(py, Engine::request(Op::Plan, sql, None, Some(schema)))
    }

    fn execute(&self, py: Python<'_>, sql: &str, schema: &str) -> PyResult<Py<PyAny>> {
        self.call(py, Engine::request(Op::Exec, sql, None, Some(schema)))
    }

    /// Outcome record: value, class and, for execution, the grade.
    #[pyo3(signature = (gen, reference, schema, scorer = None))]
    fn outcome(&self, py: Python<'_>, gen: &str, reference: &str, schema: &str, scorer: Option<&str>) -> PyResult<Py<PyAny>> {
        let mut req = Engine::request(Op::Score, gen, Some(reference), Some(schema));
        req.scorer = scorer.map(self::scorer).transpose()?;
        self.call(py, req)
    }

    #[pyo3(signature = (gen, reference, schema, scorer = None))]
    fn score(&self, py: Python<'_>, gen: &str, reference: &str, schema: &str, scorer: Option<&str>) -> PyResult<f64> {
        let o = self.outcome(py, gen, reference, schema, scorer)?;
        o.bind(py).get_item("value")?.extract()
    }

    fn steps(&self, py: Python<'_>, gen: &str, reference: &str, schema: &str) -> PyResult<Py<PyAny>> {
        self.call(py, Engine::request(Op::Steps, gen, Some(reference), Some(schema)))
    }

    #[pyo3(signature = (gen, reference, schema, kl = None, tokens = None, scorer = None, stepwise = true))]
    #[allow(clippy::too_many_arguments)]
    fn reward_trace(
        &self,
        py: Python<'_>,
        gen: &str,
        reference: &str,
        schema: &str,
        kl: Option<Vec<f64>>,
        tokens: Option<Vec<String>>,
        scorer: Option<&str>,
        stepwise: bool,
    ) -> PyResult<Py<PyAny>> {
        let mut req = Engine::request(Op::RewardTrace, gen, Some(reference), Some(schema));
        req.kl = kl;
        req.tokens = tokens;
        req.scorer = scorer.map(self::scorer).transpose()?;
        req.stepwise = Some(stepwise);
        self.call(py, req)
    }

    /// Answers one protocol line with one response line.
    fn handle(&self, py: Python<'_>, line: &str) -> String {
        py.detach(|| self.service.handle_line(line, "malformed-line-1").to_line())
    }

    fn handle_batch(&self, py: Python<'_>, lines: Vec<String>) -> Vec<String> {
        py.detach(|| {
            lines.iter().enumerate().map(|(i, l)| self.service.handle_line(l, &format!("malformed-line-{}", i + 1)).to_line()).collect()
        })
    }
}

#[pyfunction]
fn schema_ids() -> Vec<&'static str> {
    bundled_ids().collect()
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    auc_of(&scores, &labels).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Schema-split pair set: (train, held_out, held_out_schemas), pairs as dicts.
#[pyfunction]
#[pyo3(signature = (n = 2000, held_out_n = 600, seed = 0))]
fn gen_pairs(py: Python<'_>, n: usize, held_out_n: usize, seed: u64) -> PyResult<(Py<PyAny>, Py<PyAny>, Vec<String>)> {
    let config = SplitConfig { n_train: n, n_held_out: held_out_n, seed, ..SplitConfig::default() };
    let split = py.detach(|| schema_split(&toy_schemas(), &config)).map_err(err)?;
    let as_py = |v: &[SqlPair]| to_py(py, &serde_json::to_value(v).expect("pairs serialize"));
    Ok((as_py(&split.train)?, as_py(&split.held_out)?, split.held_out_schemas))
}

#[pymodule]
fn rotscore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RotscoreError", m.py().get_type::<RotscoreError>())?;
    m.add_class::<Engine>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(schema_ids, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(gen_pairs, m)?)?;
    Ok(())
}
