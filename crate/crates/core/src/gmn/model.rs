use std::ops::Range;
use std::rc::Rc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::encode::{EncodedGraph, EDGE_TYPES, INPUT_DIM};
use super::tape::{Tape, Var};
use super::train::LossVariant;
use super::Real;
use crate::plan::DEFAULT_POSITION_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Node state width.
    pub d: usize,
    /// Propagation rounds.
    pub steps: usize,
    pub d_pos: usize,
    /// Hidden width of every two-layer perceptron.
    pub width: usize,
    pub d_edge: usize,
    pub d_in: usize,
    pub precision: Precision,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            d: 64,
            steps: 5,
            d_pos: DEFAULT_POSITION_DIM,
            width: 64,
            d_edge: 16,
            d_in: INPUT_DIM,
            precision: Precision::F32,
        }
    }
}

impl Hyperparams {
    /// Tensor names and shapes in storage order.
    pub fn layout(&self) -> Vec<(&'static str, (usize, usize))> {
        let (d, w) = (self.d, self.width);
        let mut v = vec![
            ("embed.w", (self.d_in, d)),
            ("embed.b", (1, d)),
            ("edge.emb", (EDGE_TYPES, self.d_edge)),
        ];
        let mlp = |v: &mut Vec<_>, names: [&'static str; 4], input: usize, output: usize| {
            v.push((names[0], (input, w)));
            v.push((names[1], (1, w)));
            v.push((names[2], (w, output)));
            v.push((names[3], (1, output)));
        };
        mlp(&mut v, ["inner.w1", "inner.b1", "inner.w2", "inner.b2"], 2 * d + self.d_edge, d);
        mlp(&mut v, ["cross.w1", "cross.b1", "cross.w2", "cross.b2"], d + self.d_pos, d);
        v.extend([("update.w", (3 * d, d)), ("update.b", (1, d)), ("update.u", (3 * d, d)), ("update.c", (1, d))]);
        mlp(&mut v, ["gate.w1", "gate.b1", "gate.w2", "gate.b2"], d, d);
        mlp(&mut v, ["node.w1", "node.b1", "node.w2", "node.b2"], d, d);
        mlp(&mut v, ["graph.w1", "graph.b1", "graph.w2", "graph.b2"], d, d);
        v.extend([("calib.tau", (1, 1)), ("calib.log_scale", (1, 1))]);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmnError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("width mismatch in {what}: model expects {expected}, encoding has {found}")]
    WidthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("edge ({0}, {1}) out of range")]
    EdgeOutOfRange(usize, usize),
    #[error("non-finite value in {tensor}")]
    NonFinite { tensor: String },
    #[error("model precision is {model:?}, requested {requested:?}")]
    Precision { model: Precision, requested: Precision },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmnModel<F> {
    pub hyper: Hyperparams,
    pub tensors: Vec<(String, Array2<F>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forward {
    pub similarity: f64,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

/// Parameter handles on a tape, in layout order.
struct Handles(Vec<Var>);

const EMBED_W: usize = 0;
const EMBED_B: usize = 1;
const EDGE_EMB: usize = 2;
const INNER: usize = 3;
const CROSS: usize = 7;
const UPDATE: usize = 11;
const GATE: usize = 15;
const NODE: usize = 19;
const GRAPH: usize = 23;
const TAU: usize = 27;
const LOG_SCALE: usize = 28;

/// Graph pairs stacked into one block matrix.
struct Batch<F> {
    n: usize,
    features: Array2<F>,
    positions: Array2<F>,
    src: Rc<Vec<usize>>,
    dst: Rc<Vec<usize>>,
    etype: Rc<Vec<usize>>,
    node_graph: Rc<Vec<usize>>,
    blocks: Rc<Vec<(Range<usize>, Range<usize>)>>,
    left: Rc<Vec<usize>>,
    right: Rc<Vec<usize>>,
}

impl<F: Real> GmnModel<F> {
    pub fn new(hyper: Hyperparams, seed: u64) -> Self {
        let hyper = Hyperparams { precision: F::PRECISION, ..hyper };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = hyper
            .layout()
            .into_iter()
            .map(|(name, (r, c))| {
                let t = match name {
                    "calib.tau" => Array2::from_elem((1, 1), F::one()),
                    _ if r == 1 => Array2::zeros((r, c)),
                    _ => {
                        let bound = (6.0 / (r + c) as f64).sqrt();
                        Array2::from_shape_fn((r, c), |_| F::of(rng.gen_range(-bound..bound)))
                    }
                };
                (name.to_string(), t)
            })
            .collect();
        GmnModel { hyper, tensors }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<F>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn check(&self, g: &EncodedGraph) -> Result<(), GmnError> {
        if g.is_empty() {
            return Err(GmnError::EmptyGraph);
        }
        if g.features.ncols() != self.hyper.d_in {
            return Err(GmnError::WidthMismatch { what: "node features", expected: self.hyper.d_in, found: g.features.ncols() });
        }
        if g.positions.ncols() != self.hyper.d_pos {
            return Err(GmnError::WidthMismatch { what: "positional code", expected: self.hyper.d_pos, found: g.positions.ncols() });
        }
        if let Some(&(s, d, _)) = g.edges.iter().find(|&&(s, d, t)| s >= g.len() || d >= g.len() || t >= EDGE_TYPES) {
            return Err(GmnError::EdgeOutOfRange(s, d));
        }
        Ok(())
    }

    fn batch(&self, pairs: &[(&EncodedGraph, &EncodedGraph)]) -> Result<Batch<F>, GmnError> {
        for (a, b) in pairs {
            self.check(a)?;
            self.check(b)?;
        }
        let n: usize = pairs.iter().map(|(a, b)| a.len() + b.len()).sum();
        let mut features = Array2::zeros((n, self.hyper.d_in));
        let mut positions = Array2::zeros((n, self.hyper.d_pos));
        let (mut src, mut dst, mut etype, mut node_graph, mut blocks) = (vec![], vec![], vec![], vec![], vec![]);
        let mut off = 0;
        for (p, (a, b)) in pairs.iter().enumerate() {
            let mut ranges = Vec::with_capacity(2);
            for (k, g) in [a, b].into_iter().enumerate() {
                for i in 0..g.len() {
                    for j in 0..self.hyper.d_in {
                        features[[off + i, j]] = F::of(g.features[[i, j]]);
                    }
                    for j in 0..self.hyper.d_pos {
                        positions[[off + i, j]] = F::of(g.positions[[i, j]]);
                    }
                    node_graph.push(2 * p + k);
                }
                for &(s, d, t) in &g.edges {
                    src.push(off + s);
                    dst.push(off + d);
                    etype.push(t);
                }
                ranges.push(off..off + g.len());
                off += g.len();
            }
            blocks.push((ranges[0].clone(), ranges[1].clone()));
        }
        Ok(Batch {
            n,
            features,
            positions,
            src: Rc::new(src),
            dst: Rc::new(dst),
            etype: Rc::new(etype),
            node_graph: Rc::new(node_graph),
            blocks: Rc::new(blocks),
            left: Rc::new((0..pairs.len()).map(|p| 2 * p).collect()),
            right: Rc::new((0..pairs.len()).map(|p| 2 * p + 1).collect()),
        })
    }

    fn load(&self, tape: &mut Tape<F>) -> Handles {
        Handles(self.tensors.iter().enumerate().map(|(i, (_, t))| tape.param(i, t.clone())).collect())
    }

    fn mlp(tape: &mut Tape<F>, p: &Handles, at: usize, x: Var) -> Var {
        let h = tape.matmul(x, p.0[at]);
        let h = tape.add_bias(h, p.0[at + 1]);
        let h = tape.tanh(h);
        let o = tape.matmul(h, p.0[at + 2]);
        tape.add_bias(o, p.0[at + 3])
    }

    /// Similarity `P x 1` and graph embeddings `2P x d` (pair `p` at rows `2p`, `2p + 1`).
    fn forward_tape(&self, tape: &mut Tape<F>, p: &Handles, b: &Batch<F>) -> (Var, Var) {
        let x = tape.constant(b.features.clone());
        let pos = tape.constant(b.positions.clone());
        let h = tape.matmul(x, p.0[EMBED_W]);
        let mut h = tape.add_bias(h, p.0[EMBED_B]);
        let e = tape.gather(p.0[EDGE_EMB], b.etype.clone());
        let scale = F::one() / F::of(self.hyper.d as f64).sqrt();
        for _ in 0..self.hyper.steps {
            let hs = tape.gather(h, b.src.clone());
            let hd = tape.gather(h, b.dst.clone());
            let inner = tape.concat(&[hd, hs, e]);
            let msg = Self::mlp(tape, p, INNER, inner);
            let m = tape.scatter_add(msg, b.dst.clone(), b.n);
            let hp = tape.concat(&[h, pos]);
            let r = Self::mlp(tape, p, CROSS, hp);
            let mu = tape.cross_attend(r, b.blocks.clone(), scale);
            let u = tape.concat(&[h, m, mu]);
            let c = tape.matmul(u, p.0[UPDATE]);
            let c = tape.add_bias(c, p.0[UPDATE + 1]);
            let c = tape.tanh(c);
            let z = tape.matmul(u, p.0[UPDATE + 2]);
            let z = tape.add_bias(z, p.0[UPDATE + 3]);
            let z = tape.sigmoid(z);
            let delta = tape.sub(c, h);
            let delta = tape.mul(z, delta);
            h = tape.add(h, delta);
        }
        let gate = Self::mlp(tape, p, GATE, h);
        let gate = tape.sigmoid(gate);
        let v = Self::mlp(tape, p, NODE, h);
        let gv = tape.mul(gate, v);
        let pooled = tape.scatter_add(gv, b.node_graph.clone(), 2 * b.left.len());
        let hg = Self::mlp(tape, p, GRAPH, pooled);
        let l = tape.gather(hg, b.left.clone());
        let r = tape.gather(hg, b.right.clone());
        let diff = tape.sub(l, r);
        let dist = tape.row_norm(diff);
        let sim = tape.scale(dist, -F::one());
        (sim, hg)
    }

    pub fn forward_pair(&self, g1: &EncodedGraph, g2: &EncodedGraph) -> Result<Forward, GmnError> {
        let b = self.batch(&[(g1, g2)])?;
        let mut tape = Tape::new();
        let p = self.load(&mut tape);
        let (sim, hg) = self.forward_tape(&mut tape, &p, &b);
        let hg = tape.value(hg);
        Ok(Forward {
            similarity: tape.scalar(sim).f64(),
            h1: hg.row(0).iter().map(|x| x.f64()).collect(),
            h2: hg.row(1).iter().map(|x| x.f64()).collect(),
        })
    }

    /// Similarities of many pairs, evaluated in stacked batches.
    pub fn similarities(&self, pairs: &[(&EncodedGraph, &EncodedGraph)]) -> Result<Vec<f64>, GmnError> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(64) {
            let b = self.batch(chunk)?;
            let mut tape = Tape::new();
            let p = self.load(&mut tape);
            let (sim, _) = self.forward_tape(&mut tape, &p, &b);
            out.extend(tape.value(sim).iter().map(|x| x.f64()));
        }
        Ok(out)
    }

    fn loss_tape(&self, tape: &mut Tape<F>, p: &Handles, sim: Var, labels: &[f64], variant: LossVariant) -> Var {
        let n = labels.len();
        let y = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| F::of(labels[i])));
        let total = match variant {
            LossVariant::CalibratedBce => {
                // logit (tau + sim) / s with s = exp(log_scale)
                let shifted = tape.add_bias(sim, p.0[TAU]);
                let neg = tape.scale(p.0[LOG_SCALE], -F::one());
                let inv_s = tape.exp(neg);
                let z = tape.mul_row(shifted, inv_s);
                let sp = tape.softplus(z);
                let yz = tape.mul(y, z);
                let l = tape.sub(sp, yz);
                tape.sum(l)
            }
            LossVariant::Margin { margin } => {
                let dist = tape.scale(sim, -F::one());
                let d2 = tape.mul(dist, dist);
                let pos = tape.mul(y, d2);
                let m = tape.constant(Array2::from_elem((1, 1), F::of(margin)));
                let gap = tape.scale(dist, -F::one());
                let gap = tape.add_bias(gap, m);
                let gap = tape.relu(gap);
                let g2 = tape.mul(gap, gap);
                let not_y = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| F::of(1.0 - labels[i])));
                let neg = tape.mul(not_y, g2);
                let l = tape.add(pos, neg);
                tape.sum(l)
            }
        };
        tape.scale(total, F::one() / F::of(n as f64))
    }

    /// Mean loss over the labelled pairs.
    pub fn loss(&self, pairs: &[(&EncodedGraph, &EncodedGraph)], labels: &[f64], variant: LossVariant) -> Result<f64, GmnError> {
        let b = self.batch(pairs)?;
        let mut tape = Tape::new();
        let p = self.load(&mut tape);
        let (sim, _) = self.forward_tape(&mut tape, &p, &b);
        let l = self.loss_tape(&mut tape, &p, sim, labels, variant);
        Ok(tape.scalar(l).f64())
    }

    /// Mean loss and its gradient for every tensor, in layout order.
    pub fn loss_and_grad(
        &self,
        pairs: &[(&EncodedGraph, &EncodedGraph)],
        labels: &[f64],
        variant: LossVariant,
    ) -> Result<(f64, Vec<Array2<F>>), GmnError> {
        let b = self.batch(pairs)?;
        let mut tape = Tape::new();
        let p = self.load(&mut tape);
        let (sim, _) = self.forward_tape(&mut tape, &p, &b);
        let l = self.loss_tape(&mut tape, &p, sim, labels, variant);
        let loss = tape.scalar(l);
        if !loss.is_finite() {
            return Err(GmnError::NonFinite { tensor: "loss".into() });
        }
        let mut grads: Vec<Array2<F>> = self.tensors.iter().map(|(_, t)| Array2::zeros(t.dim())).collect();
        for (i, g) in tape.backward(l) {
            grads[i] += &g;
        }
        for ((name, _), g) in self.tensors.iter().zip(&grads) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(GmnError::NonFinite { tensor: name.clone() });
            }
        }
        Ok((loss.f64(), grads))
    }
}

/// A model in either precision, as loaded from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    F32(GmnModel<f32>),
    F64(GmnModel<f64>),
}

impl AnyModel {
    pub fn hyper(&self) -> &Hyperparams {
        match self {
            AnyModel::F32(m) => &m.hyper,
            AnyModel::F64(m) => &m.hyper,
        }
    }

    pub fn forward_pair(&self, g1: &EncodedGraph, g2: &EncodedGraph) -> Result<Forward, GmnError> {
        match self {
            AnyModel::F32(m) => m.forward_pair(g1, g2),
            AnyModel::F64(m) => m.forward_pair(g1, g2),
        }
    }

    pub fn similarities(&self, pairs: &[(&EncodedGraph, &EncodedGraph)]) -> Result<Vec<f64>, GmnError> {
        match self {
            AnyModel::F32(m) => m.similarities(pairs),
            AnyModel::F64(m) => m.similarities(pairs),
        }
    }
}
