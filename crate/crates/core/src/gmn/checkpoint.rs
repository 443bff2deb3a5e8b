use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::model::{AnyModel, GmnModel, Hyperparams, Precision};
use super::Real;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint format {found}, expected {FORMAT_VERSION}")]
    Version { found: u64 },
    #[error("tensor {name}: shape {shape:?} needs {expected} values, found {found}")]
    Corrupted { name: String, shape: Vec<usize>, expected: usize, found: usize },
    #[error("missing tensor {0}")]
    Missing(String),
    #[error("tensor {name}: shape {found:?}, hyperparameters give {expected:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint holds {stored:?} tensors, {requested:?} requested")]
    Precision { stored: Precision, requested: Precision },
}

#[derive(Serialize)]
struct TensorOut<'a, F> {
    shape: [usize; 2],
    data: &'a [F],
}

#[derive(Deserialize)]
struct TensorIn<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

pub fn save_checkpoint<F: Real>(model: &GmnModel<F>) -> String {
    let tensors: BTreeMap<&str, TensorOut<F>> = model
        .tensors
        .iter()
        .map(|(n, t)| {
            let data = t.as_slice().expect("standard layout");
            (n.as_str(), TensorOut { shape: [t.nrows(), t.ncols()], data })
        })
        .collect();
    serde_json::to_string(&serde_json::json!({
        "format_version": FORMAT_VERSION,
        "hyperparams": model.hyper,
        "tensors": tensors,
    }))
    .expect("serializable")
}

fn header(doc: &str) -> Result<(Value, Hyperparams), CheckpointError> {
    let v: Value = serde_json::from_str(doc).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let version = v.get("format_version").and_then(Value::as_u64).ok_or_else(|| CheckpointError::Malformed("no format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(CheckpointError::Version { found: version });
    }
    let hyper: Hyperparams = serde_json::from_value(v.get("hyperparams").cloned().unwrap_or(Value::Null))
        .map_err(|e| CheckpointError::Malformed(format!("hyperparams: {e}")))?;
    Ok((v, hyper))
}

fn load_as<F: Real>(v: &Value, hyper: Hyperparams) -> Result<GmnModel<F>, CheckpointError> {
    if hyper.precision != F::PRECISION {
        return Err(CheckpointError::Precision { stored: hyper.precision, requested: F::PRECISION });
    }
    let stored = v.get("tensors").and_then(Value::as_object).ok_or_else(|| CheckpointError::Malformed("no tensors".into()))?;
    let mut tensors = Vec::new();
    for (name, (r, c)) in hyper.layout() {
        let raw = stored.get(name).ok_or_else(|| CheckpointError::Missing(name.into()))?;
        let t: TensorIn<F> = serde_json::from_value(raw.clone()).map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))?;
        if t.shape != [r, c] {
            return Err(CheckpointError::Shape { name: name.into(), expected: vec![r, c], found: t.shape });
        }
        if t.data.len() != r * c {
            return Err(CheckpointError::Corrupted { name: name.into(), shape: t.shape, expected: r * c, found: t.data.len() });
        }
        tensors.push((name.to_string(), Array2::from_shape_vec((r, c), t.data).expect("length checked")));
    }
    Ok(GmnModel { hyper, tensors })
}

impl<F: Real> GmnModel<F> {
    /// Loads a checkpoint stored in this precision; no conversion between
    /// precisions is attempted.
    pub fn from_checkpoint(doc: &str) -> Result<Self, CheckpointError> {
        let (v, hyper) = header(doc)?;
        load_as(&v, hyper)
    }
}

pub fn load_checkpoint(doc: &str) -> Result<AnyModel, CheckpointError> {
    let (v, hyper) = header(doc)?;
    match hyper.precision {
        Precision::F32 => load_as(&v, hyper).map(AnyModel::F32),
        Precision::F64 => load_as(&v, hyper).map(AnyModel::F64),
    }
}
