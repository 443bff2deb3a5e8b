mod common;

use common::{finite_difference_error, random_graph, reference_similarity, rng};
use ndarray::Array2;
use proptest::prelude::*;
use rotscore::fixtures::toy_schema;
use rotscore::gmn::*;
use rotscore::matching::{rot_graph, Side};

fn model64(seed: u64) -> GmnModel<f64> {
    GmnModel::new(Hyperparams { precision: Precision::F64, ..Hyperparams::default() }, seed)
}

fn model32(seed: u64) -> GmnModel<f32> {
    GmnModel::new(Hyperparams::default(), seed)
}

fn encode(schema: &str, sql: &str) -> EncodedGraph {
    let s = toy_schema(schema).unwrap();
    encode_rot(&rot_graph(sql, &s.catalog, Side::Generated).unwrap(), 16)
}

#[test]
fn layout_matches_parameter_count() {
    let m = model32(0);
    let expected: usize = Hyperparams::default().layout().iter().map(|(_, (r, c))| r * c).sum();
    assert_eq!(m.parameter_count(), expected);
    assert_eq!(m.tensors.len(), 29);
}

#[test]
fn batched_forward_matches_direct_equations() {
    let mut r = rng(0);
    let g1 = random_graph(&mut r, 5, 16);
    let g2 = random_graph(&mut r, 5, 16);
    let m = model64(0);
    let sim = m.forward_pair(&g1, &g2).unwrap().similarity;
    let direct = reference_similarity(&m, &g1, &g2);
    assert!((sim - direct).abs() < 1e-10, "{sim} vs {direct}");
    assert!((sim - LOCKED_SIM).abs() < 1e-9, "{sim:.15}");
}

const LOCKED_SIM: f64 = -5.505241781872270;

#[test]
fn gradients_match_central_differences_f64() {
    let mut r = rng(7);
    for k in 0..3 {
        let g1 = random_graph(&mut r, 4 + k, 16);
        let g2 = random_graph(&mut r, 6, 16);
        let err = finite_difference_error(&model64(k as u64), &[(&g1, &g2)], &[(k % 2) as f64], 200, k as u64);
        assert!(err <= 1e-5, "pair {k}: {err:e}");
    }
}

#[test]
fn gradients_match_central_differences_f32() {
    let mut r = rng(8);
    let g1 = random_graph(&mut r, 5, 16);
    let g2 = random_graph(&mut r, 7, 16);
    let err = finite_difference_error(&model32(1), &[(&g1, &g2)], &[1.0], 200, 11);
    assert!(err <= 1e-3, "{err:e}");
}

#[test]
fn degenerate_graph_has_finite_gradients() {
    let zero = EncodedGraph { features: Array2::zeros((3, INPUT_DIM)), positions: Array2::zeros((3, 16)), edges: vec![] };
    let m = model64(2);
    for label in [0.0, 1.0] {
        let (loss, grads) = m.loss_and_grad(&[(&zero, &zero)], &[label], LossVariant::CalibratedBce).unwrap();
        assert!(loss.is_finite());
        assert!(grads.iter().all(|g| g.iter().all(|x| x.is_finite())));
    }
}

#[test]
fn identical_graphs_have_zero_distance() {
    let g = encode("singer", "SELECT name FROM singer WHERE birth_year > 1980");
    assert_eq!(model64(3).forward_pair(&g, &g).unwrap().similarity, 0.0);
    assert!(model32(3).forward_pair(&g, &g).unwrap().similarity.abs() <= 1e-5);
}

#[test]
fn malformed_encodings_are_rejected() {
    let m = model32(0);
    let g = encode("singer", "SELECT name FROM singer");
    let narrow = EncodedGraph { features: Array2::zeros((2, 10)), positions: Array2::zeros((2, 16)), edges: vec![] };
    assert!(matches!(m.forward_pair(&g, &narrow), Err(GmnError::WidthMismatch { .. })));
    let empty = EncodedGraph { features: Array2::zeros((0, INPUT_DIM)), positions: Array2::zeros((0, 16)), edges: vec![] };
    assert_eq!(m.forward_pair(&empty, &g).unwrap_err(), GmnError::EmptyGraph);
    let mut bad = g.clone();
    bad.edges.push((0, 99, 0));
    assert!(matches!(m.forward_pair(&g, &bad), Err(GmnError::EdgeOutOfRange(0, 99))));
}

#[test]
fn batched_similarities_equal_single_pairs() {
    let mut r = rng(4);
    let gs: Vec<_> = (0..6).map(|i| random_graph(&mut r, 3 + i, 16)).collect();
    let m = model64(5);
    let pairs: Vec<_> = (0..5).map(|i| (&gs[i], &gs[i + 1])).collect();
    let batched = m.similarities(&pairs).unwrap();
    for ((a, b), s) in pairs.iter().zip(batched) {
        assert!((m.forward_pair(a, b).unwrap().similarity - s).abs() < 1e-12);
    }
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                count += 1.0;
                total += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    total / count
}

#[test]
fn auc_fixtures() {
    assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
    // a positive tied with a negative: three concordant comparisons and one half
    let s = [0.9, 0.5, 0.5, 0.1];
    let l = [true, true, false, false];
    assert_eq!(brute_auc(&s, &l), 0.875);
    assert_eq!(auc(&s, &l).unwrap(), 0.875);
    // a full inversion loses the whole comparison
    let s = [0.9, 0.4, 0.5, 0.1];
    assert_eq!(brute_auc(&s, &l), 0.75);
    assert_eq!(auc(&s, &l).unwrap(), 0.75);
    assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(AucError::SingleClass));
}

#[test]
fn auc_of_random_scores_is_near_half() {
    use rand::Rng;
    let mut r = rng(9);
    let s: Vec<f64> = (0..20000).map(|_| r.gen()).collect();
    let l: Vec<bool> = (0..20000).map(|_| r.gen()).collect();
    assert!((auc(&s, &l).unwrap() - 0.5).abs() < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn auc_matches_pairwise_oracle(v in prop::collection::vec((0u8..6, any::<bool>()), 2..40)) {
        let s: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
        let l: Vec<bool> = v.iter().map(|p| p.1).collect();
        prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
        prop_assert!((auc(&s, &l).unwrap() - brute_auc(&s, &l)).abs() < 1e-12);
    }

    #[test]
    fn similarity_is_symmetric_and_nonpositive(seed in 0u64..1000, n1 in 1usize..9, n2 in 1usize..9) {
        let mut r = rng(seed);
        let a = random_graph(&mut r, n1, 16);
        let b = random_graph(&mut r, n2, 16);
        let m = model32(seed);
        let ab = m.forward_pair(&a, &b).unwrap().similarity;
        let ba = m.forward_pair(&b, &a).unwrap().similarity;
        prop_assert!(ab <= 0.0 && ba <= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-5, "{} {}", ab, ba);
    }

    #[test]
    fn similarity_ignores_node_order(seed in 0u64..1000, n in 2usize..9, shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut r = rng(seed);
        let a = random_graph(&mut r, n, 16);
        let b = random_graph(&mut r, n + 1, 16);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(shuffle));
        let m = model32(seed);
        let base = m.forward_pair(&a, &b).unwrap().similarity;
        let moved = m.forward_pair(&a.permuted(&perm), &b).unwrap().similarity;
        prop_assert!((base - moved).abs() <= 1e-5, "{} {}", base, moved);
    }
}

fn toy_pairs() -> Vec<LabeledPair> {
    let a = encode("singer", "SELECT name FROM singer WHERE birth_year > 1980");
    let b = encode("singer", "SELECT title, sales FROM song ORDER BY sales DESC LIMIT 3");
    vec![(a.clone(), a.clone(), true), (a, b, false)]
}

#[test]
fn toy_training_loss_decreases() {
    let out = train(&model32(0), &toy_pairs(), None, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap();
    let losses: Vec<f64> = out.history.epochs.iter().map(|e| e.loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let m = model32(0);
    let out = train(&m, &toy_pairs(), None, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(out.model, m);
    assert!(out.history.epochs.is_empty());
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig { epochs: 3, batch_size: 1, ..TrainConfig::default() };
    let pairs = toy_pairs();
    let a = train(&model32(0), &pairs, Some(&pairs), &cfg).unwrap();
    let b = train(&model32(0), &pairs, Some(&pairs), &cfg).unwrap();
    assert_eq!(a.model, b.model);
    let strip = |h: &History| h.epochs.iter().map(|e| (e.loss, e.held_out_auc)).collect::<Vec<_>>();
    assert_eq!(strip(&a.history), strip(&b.history));
    assert!(a.history.epochs.iter().all(|e| e.held_out_auc.is_some()));
}

#[test]
fn training_rejects_missing_class() {
    let mut pairs = toy_pairs();
    pairs.pop();
    assert!(matches!(train(&model32(0), &pairs, None, &TrainConfig::default()), Err(TrainError::TooFewLabels { .. })));
    let cfg = TrainConfig { schedule: Schedule::Constant { lr: 0.0 }, ..TrainConfig::default() };
    assert!(matches!(train(&model32(0), &toy_pairs(), None, &cfg), Err(TrainError::StepSize)));
}

#[test]
fn divergence_returns_last_good_model() {
    let cfg = TrainConfig { schedule: Schedule::Constant { lr: 1e38 }, epochs: 5, ..TrainConfig::default() };
    match train(&model32(0), &toy_pairs(), None, &cfg) {
        Err(TrainError::Diverged { last_good, .. }) => {
            assert!(last_good.tensors.iter().all(|(_, t)| t.iter().all(|x| x.is_finite())));
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn margin_loss_trains() {
    let cfg = TrainConfig { epochs: 5, loss: LossVariant::Margin { margin: 20.0 }, ..TrainConfig::default() };
    let out = train(&model32(0), &toy_pairs(), None, &cfg).unwrap();
    let e = &out.history.epochs;
    assert!(e.last().unwrap().loss < e[0].loss);
}

#[test]
fn trained_model_ranks_self_first() {
    let pairs = toy_pairs();
    let out = train(&model32(0), &pairs, None, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap();
    let graphs: Vec<&EncodedGraph> = pairs.iter().flat_map(|p| [&p.0, &p.1]).collect();
    for g in &graphs {
        let own = out.model.forward_pair(g, g).unwrap().similarity;
        for h in &graphs {
            assert!(own >= out.model.forward_pair(g, h).unwrap().similarity);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let g1 = encode("singer", "SELECT name FROM singer WHERE birth_year > 1980");
    let g2 = encode("singer", "SELECT name FROM singer WHERE birth_year >= 1980");
    let m = model32(6);
    let doc = save_checkpoint(&m);
    let back = GmnModel::<f32>::from_checkpoint(&doc).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.forward_pair(&g1, &g2).unwrap().similarity.to_bits(), m.forward_pair(&g1, &g2).unwrap().similarity.to_bits());
    let m64 = model64(6);
    match load_checkpoint(&save_checkpoint(&m64)).unwrap() {
        AnyModel::F64(x) => assert_eq!(x, m64),
        AnyModel::F32(_) => panic!("precision changed"),
    }
}

#[test]
fn checkpoint_errors() {
    let doc = save_checkpoint(&model64(0));
    assert!(matches!(GmnModel::<f32>::from_checkpoint(&doc), Err(CheckpointError::Precision { .. })));
    let mut v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    v["tensors"]["inner.w2"]["data"].as_array_mut().unwrap().pop();
    assert!(matches!(load_checkpoint(&v.to_string()), Err(CheckpointError::Corrupted { .. })));
    let mut v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    v["format_version"] = 99.into();
    assert_eq!(load_checkpoint(&v.to_string()).unwrap_err(), CheckpointError::Version { found: 99 });
    assert!(matches!(load_checkpoint(&doc[..doc.len() / 2]), Err(CheckpointError::Malformed(_))));
}

#[test]
fn encodings_are_well_formed() {
    let g = encode("singer", "SELECT s.name FROM singer AS s JOIN song AS t ON s.singer_id = t.singer_id WHERE t.sales > 10");
    assert_eq!(g.features.ncols(), INPUT_DIM);
    assert!(g.features.iter().chain(g.positions.iter()).all(|x| x.is_finite()));
    assert!(g.edges.iter().all(|&(s, d, t)| s < g.len() && d < g.len() && t < EDGE_TYPES));
    assert!(g.edges.iter().any(|e| e.2 == 2));
    // 36 and 37 differ in the literal features
    let a = encode("workshop", "SELECT name FROM technician WHERE age = 36");
    let b = encode("workshop", "SELECT name FROM technician WHERE age = 37");
    assert_ne!(a.features, b.features);
}
