#![allow(dead_code)]

pub mod brute;
pub mod exec_cases;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotscore::gmn::{EncodedGraph, GmnModel, EDGE_TYPES, INPUT_DIM};

/// Random tree-shaped graph with sparse binary features and a few extra
/// data-flow edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, d_pos: usize) -> EncodedGraph {
    let mut features = Array2::zeros((n, INPUT_DIM));
    for i in 0..n {
        features[[i, rng.gen_range(0..31)]] = 1.0;
        features[[i, 31 + rng.gen_range(0..64)]] = 1.0;
        features[[i, INPUT_DIM - 1]] = rng.gen_range(-1.0..1.0);
    }
    let positions = Array2::from_shape_fn((n, d_pos), |_| rng.gen_range(-1.0..1.0));
    let mut edges = Vec::new();
    for v in 1..n {
        let p = rng.gen_range(0..v);
        edges.push((p, v, 0));
        edges.push((v, p, 1));
    }
    for _ in 0..n / 2 {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.push((a, b, 2));
            edges.push((b, a, 3));
        }
    }
    assert!(edges.iter().all(|e| e.2 < EDGE_TYPES));
    EncodedGraph { features, positions, edges }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

type M = Vec<Vec<f64>>;

fn t(model: &GmnModel<f64>, name: &str) -> M {
    let a = model.tensor(name).unwrap();
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn affine(x: &[f64], w: &M, b: &M) -> Vec<f64> {
    (0..b[0].len()).map(|j| b[0][j] + x.iter().zip(w).map(|(xi, wr)| xi * wr[j]).sum::<f64>()).collect()
}

fn mlp(model: &GmnModel<f64>, prefix: &str, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> =
        affine(x, &t(model, &format!("{prefix}.w1")), &t(model, &format!("{prefix}.b1"))).into_iter().map(f64::tanh).collect();
    affine(&h, &t(model, &format!("{prefix}.w2")), &t(model, &format!("{prefix}.b2")))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct per-node transcription of the propagation, attention, update and
/// readout equations, with no batching and no tape.
pub fn reference_similarity(model: &GmnModel<f64>, g1: &EncodedGraph, g2: &EncodedGraph) -> f64 {
    let d = model.hyper.d;
    let graphs = [g1, g2];
    let mut h: Vec<M> = graphs
        .iter()
        .map(|g| {
            (0..g.len())
                .map(|i| affine(&g.features.row(i).to_vec(), &t(model, "embed.w"), &t(model, "embed.b")))
                .collect()
        })
        .collect();
    let emb = t(model, "edge.emb");
    for _ in 0..model.hyper.steps {
        let r: Vec<M> = (0..2)
            .map(|k| {
                (0..graphs[k].len())
                    .map(|v| {
                        let mut x = h[k][v].clone();
                        x.extend(graphs[k].positions.row(v).iter());
                        mlp(model, "cross", &x)
                    })
                    .collect()
            })
            .collect();
        let mut next = h.clone();
        for k in 0..2 {
            let other = 1 - k;
            for v in 0..graphs[k].len() {
                let mut m = vec![0.0; d];
                for &(s, dst, ty) in &graphs[k].edges {
                    if dst != v {
                        continue;
                    }
                    let mut x = h[k][v].clone();
                    x.extend(&h[k][s]);
                    x.extend(&emb[ty]);
                    for (mi, fi) in m.iter_mut().zip(mlp(model, "inner", &x)) {
                        *mi += fi;
                    }
                }
                let scores: Vec<f64> = r[other]
                    .iter()
                    .map(|ru| r[k][v].iter().zip(ru).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - top).exp()).sum();
                let mut mu = vec![0.0; d];
                for (u, s) in scores.iter().enumerate() {
                    let a = (s - top).exp() / z;
                    for j in 0..d {
                        mu[j] += a * (r[k][v][j] - r[other][u][j]);
                    }
                }
                let mut cat = h[k][v].clone();
                cat.extend(&m);
                cat.extend(&mu);
                let cand: Vec<f64> = affine(&cat, &t(model, "update.w"), &t(model, "update.b")).into_iter().map(f64::tanh).collect();
                let gate: Vec<f64> = affine(&cat, &t(model, "update.u"), &t(model, "update.c")).into_iter().map(sigmoid).collect();
                for j in 0..d {
                    next[k][v][j] = (1.0 - gate[j]) * h[k][v][j] + gate[j] * cand[j];
                }
            }
        }
        h = next;
    }
    let embed = |k: usize| -> Vec<f64> {
        let mut pooled = vec![0.0; d];
        for hv in &h[k] {
            let g = mlp(model, "gate", hv);
            let x = mlp(model, "node", hv);
            for j in 0..d {
                pooled[j] += sigmoid(g[j]) * x[j];
            }
        }
        mlp(model, "graph", &pooled)
    };
    let (a, b) = (embed(0), embed(1));
    -a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest relative error between analytic gradients and central
/// differences over `samples` coordinates chosen at random.
pub fn finite_difference_error<F: rotscore::gmn::Real>(
    model: &GmnModel<F>,
    pairs: &[(&EncodedGraph, &EncodedGraph)],
    labels: &[f64],
    samples: usize,
    seed: u64,
) -> f64 {
    use rotscore::gmn::LossVariant;
    let (_, grads) = model.loss_and_grad(pairs, labels, LossVariant::CalibratedBce).unwrap();
    // differences always in double precision on the same parameter values
    let wide = GmnModel::<f64> {
        hyper: rotscore::gmn::Hyperparams { precision: rotscore::gmn::Precision::F64, ..model.hyper },
        tensors: model.tensors.iter().map(|(n, t)| (n.clone(), t.mapv(|x| x.to_f64().unwrap()))).collect(),
    };
    let mut r = rng(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let k = r.gen_range(0..wide.tensors.len());
        let len = wide.tensors[k].1.len();
        let idx = r.gen_range(0..len);
        let eval = |delta: f64| {
            let mut m = wide.clone();
            m.tensors[k].1.as_slice_mut().unwrap()[idx] += delta;
            m.loss(pairs, labels, LossVariant::CalibratedBce).unwrap()
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let analytic = grads[k].as_slice().unwrap()[idx].to_f64().unwrap();
        let err = relative_error(analytic, numeric);
        worst = worst.max(err);
    }
    worst
}

/// `|a - b| / max(|a|, |b|)`, with the denominator floored so coordinates
/// whose gradient is numerically zero compare absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

