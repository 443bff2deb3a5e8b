//! Graph matching network over plan graphs: encoding, batched forward and
//! backward passes, training, ranking metrics and checkpoints.

mod checkpoint;
mod encode;
mod model;
pub mod tape;
mod train;

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, FORMAT_VERSION};
pub use encode::{encode_graph, encode_rot, EncodedGraph, EDGE_TYPES, INPUT_DIM};
pub use model::{AnyModel, Forward, GmnError, GmnModel, Hyperparams, Precision};
pub use train::{auc, train, AucError, Epoch, History, LabeledPair, LossVariant, Schedule, TrainConfig, TrainError, TrainOutcome};

/// Floating point types the network runs in.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + LinalgScalar
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + std::ops::AddAssign
    + std::ops::SubAssign
    + 'static
{
    const PRECISION: Precision;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::F32;
}

impl Real for f64 {
    const PRECISION: Precision = Precision::F64;
}
