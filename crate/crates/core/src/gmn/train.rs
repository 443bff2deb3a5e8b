use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::encode::EncodedGraph;
use super::model::{GmnError, GmnModel};
use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant { lr: f64 },
    /// Cosine decay from `lr` to `min_lr` across all steps.
    Cosine { lr: f64, min_lr: f64 },
}

impl Schedule {
    fn at(&self, step: usize, total: usize) -> f64 {
        match *self {
            Schedule::Constant { lr } => lr,
            Schedule::Cosine { lr, min_lr } => {
                let t = step as f64 / total.max(1) as f64;
                min_lr + 0.5 * (lr - min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }

    fn base(&self) -> f64 {
        match *self {
            Schedule::Constant { lr } | Schedule::Cosine { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossVariant {
    /// Binary cross-entropy on `sigmoid((tau + sim) / s)`.
    CalibratedBce,
    /// Squared distance for positives, squared hinge below `margin` for negatives.
    Margin { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: Schedule::Constant { lr: 1e-3 },
            batch_size: 16,
            epochs: 10,
            seed: 0,
            loss: LossVariant::CalibratedBce,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Epoch {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out_auc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct History {
    pub config: TrainConfig,
    pub epochs: Vec<Epoch>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub model: GmnModel<F>,
    pub history: History,
}

#[derive(Debug, Clone, Error)]
pub enum TrainError<F> {
    #[error("training needs pairs of both labels, got {positives} positive and {negatives} negative")]
    TooFewLabels { positives: usize, negatives: usize },
    #[error("step size must be positive")]
    StepSize,
    #[error("batch size must be positive")]
    BatchSize,
    #[error("loss diverged in epoch {epoch}")]
    Diverged { epoch: usize, last_good: Box<GmnModel<F>>, history: History },
    #[error(transparent)]
    Model(GmnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AucError {
    #[error("ranking needs both labels present")]
    SingleClass,
    #[error("{scores} scores for {labels} labels")]
    Length { scores: usize, labels: usize },
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, AucError> {
    if scores.len() != labels.len() {
        return Err(AucError::Length { scores: scores.len(), labels: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(AucError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub type LabeledPair = (EncodedGraph, EncodedGraph, bool);

impl<F: Real> GmnModel<F> {
    pub fn auc(&self, pairs: &[LabeledPair]) -> Result<f64, TrainError<F>> {
        let refs: Vec<_> = pairs.iter().map(|(a, b, _)| (a, b)).collect();
        let sims = self.similarities(&refs).map_err(TrainError::Model)?;
        let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        auc(&sims, &labels).map_err(|_| TrainError::TooFewLabels {
            positives: labels.iter().filter(|&&l| l).count(),
            negatives: labels.iter().filter(|&&l| !l).count(),
        })
    }
}

struct Adam<F> {
    m: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
    t: i32,
}

impl<F: Real> Adam<F> {
    fn new(model: &GmnModel<F>) -> Self {
        let zeros = || model.tensors.iter().map(|(_, t)| Array2::zeros(t.dim())).collect();
        Adam { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, model: &mut GmnModel<F>, grads: &[Array2<F>], lr: f64) {
        let (b1, b2, eps) = (F::of(0.9), F::of(0.999), F::of(1e-8));
        self.t += 1;
        let c1 = F::one() - b1.powi(self.t);
        let c2 = F::one() - b2.powi(self.t);
        let lr = F::of(lr);
        for (k, ((_, w), g)) in model.tensors.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Minibatch training with Adam. Held-out AUC is recorded per epoch when a
/// held-out set with both labels is given.
pub fn train<F: Real>(
    model: &GmnModel<F>,
    pairs: &[LabeledPair],
    held_out: Option<&[LabeledPair]>,
    config: &TrainConfig,
) -> Result<TrainOutcome<F>, TrainError<F>> {
    let positives = pairs.iter().filter(|p| p.2).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::TooFewLabels { positives, negatives });
    }
    if !(config.schedule.base() > 0.0) {
        return Err(TrainError::StepSize);
    }
    if config.batch_size == 0 {
        return Err(TrainError::BatchSize);
    }
    let mut model = model.clone();
    let mut history = History { config: config.clone(), epochs: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let steps_per_epoch = pairs.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut step = 0;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&pairs[i].0, &pairs[i].1)).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| if pairs[i].2 { 1.0 } else { 0.0 }).collect();
            let diverged = |model: &GmnModel<F>, history: &History| TrainError::Diverged {
                epoch,
                last_good: Box::new(model.clone()),
                history: history.clone(),
            };
            let (loss, grads) = match model.loss_and_grad(&batch, &labels, config.loss) {
                Ok(v) => v,
                Err(GmnError::NonFinite { .. }) => return Err(diverged(&model, &history)),
                Err(e) => return Err(TrainError::Model(e)),
            };
            let before = model.clone();
            adam.step(&mut model, &grads, config.schedule.at(step, total_steps));
            if model.tensors.iter().any(|(_, t)| t.iter().any(|x| !x.is_finite())) {
                return Err(diverged(&before, &history));
            }
            step += 1;
            loss_sum += loss * chunk.len() as f64;
        }
        let held_out_auc = match held_out {
            Some(h) => model.auc(h).ok(),
            None => None,
        };
        history.epochs.push(Epoch {
            epoch,
            loss: loss_sum / pairs.len() as f64,
            held_out_auc,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { model, history })
}
