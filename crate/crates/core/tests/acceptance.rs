//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::brute::Brute;
use common::exec_cases::{expected_rows, setup, CASES};
use common::{finite_difference_error, random_graph, rng};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotscore::eval::{labeled_pairs, schema_split, scorer_auc, SplitConfig};
use rotscore::exec::{ex_reward, execute, results_equal, ExGrade, ResultRelation};
use rotscore::fixtures::{toy_schema, toy_schemas, ToySchema};
use rotscore::gmn::*;
use rotscore::matching::{
    astpm, astpm_report, f_beta, partial_match, relpm, relpm_report, rot_graph, LabeledTree, Side, DEFAULT_ALPHA,
    DEFAULT_BETA,
};
use rotscore::pairgen::{build_dataset, default_seeds, generate, synthesize_seeds, DatasetConfig, Generator, SqlPair};
use rotscore::plan::{load_catalog, rot_as_tree};
use rotscore::reward::{gmnscore, reward_trace, OutcomeClass, RewardConfig, Scorer};
use rotscore::sql::{ast_as_tree, parse, print_canonical, tokenize};
use rotscore::steprtm::{segment_cte, step_rewards};

const A: f64 = DEFAULT_ALPHA;
const B: f64 = DEFAULT_BETA;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn corpus() -> Vec<(String, String)> {
    include_str!("../fixtures/corpus.jsonl")
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["schema_id"].as_str().unwrap().to_string(), v["sql"].as_str().unwrap().to_string())
        })
        .collect()
}

fn schema<'a>(schemas: &'a [ToySchema], id: &str) -> &'a ToySchema {
    schemas.iter().find(|s| s.id == id).unwrap()
}

fn unordered(mut r: ResultRelation) -> ResultRelation {
    r.ordered = false;
    r
}

fn reward_maps() -> Outcome {
    let users = load_catalog(
        r#"{"tables":[{"name":"users","columns":[{"name":"id","type":"number"},{"name":"name","type":"text"}],"primary_key":["id"]}]}"#,
    )
    .unwrap();
    let model = AnyModel::F32(GmnModel::new(Hyperparams::default(), 1));
    let s = gmnscore("SELEC id FROM users", "SELECT id FROM users", &users, &model).unwrap();
    ensure!(s.value == -1.0 && s.class == OutcomeClass::SyntaxError, "syntax fixture gave {s:?}");
    let s = gmnscore("WITH sub1 AS (SELECT id, name FROM users) SELECT age FROM sub1", "SELECT id FROM users", &users, &model).unwrap();
    ensure!(s.value == -0.6 && s.class == OutcomeClass::RotError, "unresolved-column fixture gave {s:?}");
    let forum = toy_schema("forum").unwrap();
    let reference = "SELECT id FROM users WHERE reputation > 100";
    let cases = [
        ("SELECT id FROM users WHERE 100 < reputation", ExGrade::Correct, 1.0),
        ("SELECT id FROM users WHERE reputation <= 100", ExGrade::Incorrect, -0.3),
        ("SELECT idd FROM users", ExGrade::RuntimeError, -0.6),
        ("SELECT id FROM users WHERE", ExGrade::SyntaxError, -1.0),
    ];
    for (gen, grade, value) in cases {
        let r = ex_reward(gen, reference, &forum.db, &forum.catalog).unwrap();
        ensure!(r.grade == grade && r.value == value, "{gen}: {r:?}");
    }
    Ok("gmnscore -1/-0.6, ex 1/-0.3/-0.6/-1".into())
}

fn matching_identities() -> Outcome {
    let schemas = toy_schemas();
    let statements = corpus();
    let step = statements.len() / 50;
    let mut identical = 0;
    for (sid, sql) in statements.iter().step_by(step).take(50) {
        let cat = &schema(&schemas, sid).catalog;
        let (r, a) = (relpm(sql, sql, cat, A, B).unwrap(), astpm(sql, sql, A, B).unwrap());
        ensure!(r == 1.0 && a == 1.0, "{sql}: relpm {r} astpm {a}");
        identical += 1;
    }
    ensure!(identical == 50, "only {identical} identical pairs");
    let mut fb = 0;
    for w in statements.windows(2).step_by(7) {
        let ((s1, g), (s2, r)) = (&w[0], &w[1]);
        let mut reports = vec![astpm_report(g, r, A, B).unwrap()];
        if s1 == s2 {
            reports.push(relpm_report(g, r, &schema(&schemas, s1).catalog, A, B).unwrap());
        }
        for m in reports {
            let b2 = B * B;
            let (p, rc) = (m.precision, m.recall);
            let closed = if p == 0.0 && rc == 0.0 { 0.0 } else { (1.0 + b2) * p * rc / (b2 * p + rc) };
            ensure!((m.f_beta - closed).abs() <= 1e-12, "f_beta {} vs {closed}", m.f_beta);
            ensure!((f_beta(p, rc, B) - closed).abs() <= 1e-12, "f_beta() disagrees");
            fb += 1;
        }
    }
    let small: Vec<LabeledTree> = statements
        .iter()
        .flat_map(|(sid, sql)| {
            let cat = &schema(&schemas, sid).catalog;
            [ast_as_tree(&parse(sql).unwrap()), rot_as_tree(&rot_graph(sql, cat, Side::Generated).unwrap())]
        })
        .filter(|t| t.len() <= 8)
        .collect();
    let mut brute = 0;
    for g in &small {
        for r in &small {
            let greedy = partial_match(g, r, A, B).matched_reference.len();
            let exhaustive = Brute { g, r, alpha: A }.matched_reference();
            ensure!(greedy == exhaustive, "greedy {greedy} vs exhaustive {exhaustive}\n{}\n{}", g.render(), r.render());
            brute += 1;
        }
    }
    Ok(format!("50 identical pairs, {fb} f_beta checks, {} small trees / {brute} pairs exhaustive", small.len()))
}

const EQUIVALENT: &[(&str, &str, &str)] = &[
    ("workshop", "SELECT Name FROM technician WHERE Age IN (36, 37)", "SELECT Name FROM technician WHERE Age = 36 OR Age = 37"),
    (
        "workshop",
        "SELECT Name FROM (SELECT Name, Age FROM technician) AS t WHERE Age IN (36, 37)",
        "SELECT Name FROM (SELECT Name, Age FROM technician) AS t WHERE Age = 36 OR Age = 37",
    ),
    ("singer", "SELECT name FROM singer WHERE birth_year IN (1980, 1990, 2000)", "SELECT name FROM singer WHERE birth_year = 1980 OR birth_year = 1990 OR birth_year = 2000"),
    ("singer", "SELECT name FROM singer WHERE birth_year NOT IN (1980)", "SELECT name FROM singer WHERE NOT birth_year = 1980"),
    ("pets", "SELECT fname FROM student WHERE age IN (19, 20)", "SELECT fname FROM student WHERE age = 20 OR age = 19"),
    ("pets", "SELECT s.fname FROM student AS s WHERE s.age > 20", "SELECT fname FROM student WHERE age > 20"),
    ("pets", "SELECT fname FROM student WHERE age BETWEEN 19 AND 21", "SELECT fname FROM student WHERE age >= 19 AND age <= 21"),
    ("pets", "SELECT fname FROM student WHERE age > 18 AND sex = 'F'", "SELECT fname FROM student WHERE sex = 'F' AND age > 18"),
    ("pets", "SELECT fname FROM student WHERE 20 < age", "SELECT fname FROM student WHERE age > 20"),
    ("forum", "SELECT id FROM users WHERE reputation IN (1, 101)", "SELECT id FROM users WHERE reputation = 1 OR reputation = 101"),
    (
        "forum",
        "WITH hi AS (SELECT id, reputation FROM users WHERE reputation > 100) SELECT id FROM hi",
        "SELECT id FROM (SELECT id, reputation FROM users WHERE reputation > 100) AS hi",
    ),
];

fn normalization_equivalence() -> Outcome {
    let schemas = toy_schemas();
    let seeds = default_seeds(&schemas, 300, 0);
    let generated = build_dataset(&seeds, &schemas, &DatasetConfig { n: 2000, ..DatasetConfig::default() }).unwrap();
    let mut pairs: Vec<(String, String, String)> =
        EQUIVALENT.iter().map(|&(s, a, b)| (s.to_string(), a.to_string(), b.to_string())).collect();
    pairs.extend(
        generated
            .iter()
            .filter(|p| p.label == 1)
            .map(|p| (p.schema_id.clone(), p.reference_sql.clone(), p.candidate_sql.clone())),
    );
    for (sid, a, b) in &pairs {
        let s = schema(&schemas, sid);
        let score = relpm(b, a, &s.catalog, A, B).map_err(|e| format!("{b}: {e}"))?;
        ensure!(score == 1.0, "relpm {score} for\n  {a}\n  {b}");
        let ra = unordered(execute(a, &s.db, &s.catalog).map_err(|e| format!("{a}: {e}"))?);
        let rb = unordered(execute(b, &s.db, &s.catalog).map_err(|e| format!("{b}: {e}"))?);
        ensure!(results_equal(&ra, &rb), "results differ for\n  {a}\n  {b}");
    }
    Ok(format!("{} equivalent pairs ({} hand-written)", pairs.len(), EQUIVALENT.len()))
}

fn steprtm_budget() -> Outcome {
    let schemas = toy_schemas();
    let mut pairs = Vec::new();
    for (i, s) in schemas.iter().enumerate() {
        for (k, seed) in synthesize_seeds(s, 60, i as u64).iter().enumerate() {
            if let Ok(p) = generate(&seed.sql, &s.catalog, None, &Generator::CteRewrite, k as u64) {
                pairs.push((i, p.candidate_sql, p.reference_sql));
            }
        }
    }
    ensure!(pairs.len() >= 100, "only {} CTE pairs", pairs.len());
    for (si, gen, reference) in &pairs {
        let cat = &schemas[*si].catalog;
        let t = step_rewards(gen, reference, cat, A).map_err(|e| e.to_string())?;
        let mut prev = 0.0;
        for s in &t.steps {
            ensure!(s.increment >= 0.0 && s.coverage >= prev, "{gen}: {:?}", t.steps);
            prev = s.coverage;
        }
        let sum: f64 = t.steps.iter().map(|s| s.increment).sum();
        ensure!((sum - t.total()).abs() < 1e-12 && t.total() <= 1.0, "{gen}: sum {sum} total {}", t.total());
        let seg = segment_cte(gen).unwrap();
        let n = seg.len();
        let mut defs = vec![format!("{} AS ({})", seg.segments[0].name.as_deref().unwrap(), seg.body(0))];
        defs.push(format!("replay AS ({})", seg.body(0)));
        for i in 1..n - 1 {
            defs.push(format!("{} AS ({})", seg.segments[i].name.as_deref().unwrap(), seg.body(i)));
        }
        let replayed = step_rewards(&format!("WITH {} {}", defs.join(", "), seg.body(n - 1)), reference, cat, A).unwrap();
        ensure!(replayed.steps[1].increment == 0.0, "repeated CTE earned {}", replayed.steps[1].increment);
    }
    Ok(format!("{} CTE pairs", pairs.len()))
}

fn gmn_numerics() -> Outcome {
    let model = |seed| GmnModel::<f64>::new(Hyperparams { precision: Precision::F64, ..Hyperparams::default() }, seed);
    let mut r = rng(7);
    let mut worst_fd: f64 = 0.0;
    for k in 0..3u64 {
        let g1 = random_graph(&mut r, 4 + k as usize, 16);
        let g2 = random_graph(&mut r, 6, 16);
        worst_fd = worst_fd.max(finite_difference_error(&model(k), &[(&g1, &g2)], &[(k % 2) as f64], 200, k));
    }
    ensure!(worst_fd <= 1e-5, "finite-difference relative error {worst_fd:e}");
    let (mut sym, mut perm, mut own): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for seed in 0..20u64 {
        use rand::seq::SliceRandom;
        let m = model(seed);
        let mut r = rng(100 + seed);
        let (n1, n2) = (r.gen_range(1..9), r.gen_range(1..9));
        let a = random_graph(&mut r, n1, 16);
        let b = random_graph(&mut r, n2, 16);
        let ab = m.forward_pair(&a, &b).unwrap().similarity;
        sym = sym.max((ab - m.forward_pair(&b, &a).unwrap().similarity).abs());
        let mut order: Vec<usize> = (0..n1).collect();
        order.shuffle(&mut r);
        perm = perm.max((ab - m.forward_pair(&a.permuted(&order), &b).unwrap().similarity).abs());
        own = own.min(m.forward_pair(&a, &a).unwrap().similarity);
    }
    ensure!(sym <= 1e-5, "symmetry deviation {sym:e}");
    ensure!(perm <= 1e-5, "permutation deviation {perm:e}");
    ensure!(own >= -1e-5, "sim(g, g) = {own:e}");
    Ok(format!("fd {worst_fd:.1e}, symmetry {sym:.1e}, permutation {perm:.1e}, min sim(g,g) {own:.1e}"))
}

fn desk_scale_learning() -> Outcome {
    let schemas = toy_schemas();
    let split = schema_split(&schemas, &SplitConfig::default()).map_err(|e| e.to_string())?;
    ensure!(split.train.len() >= 2000, "{} training pairs", split.train.len());
    let train_set = labeled_pairs(&split.train, &schemas, 16).map_err(|e| e.to_string())?;
    let config = TrainConfig { epochs: 16, schedule: Schedule::Cosine { lr: 1e-3, min_lr: 5e-5 }, ..Default::default() };
    let trained = train(&GmnModel::<f32>::new(Hyperparams::default(), 0), &train_set, None, &config).map_err(|e| format!("{e:?}"))?;
    let mut gmn = RewardConfig::new(Scorer::Gmn);
    gmn.model = Some(Arc::new(AnyModel::F32(trained.model)));
    let auc = |c: &RewardConfig| scorer_auc(&split.held_out, &schemas, c).map_err(|e| e.to_string());
    let (g, r, a) = (auc(&gmn)?, auc(&RewardConfig::new(Scorer::Relpm))?, auc(&RewardConfig::new(Scorer::Astpm))?);
    let detail = format!(
        "{} train / {} held-out pairs on {:?}: gmn {g:.4}, relpm {r:.4}, astpm {a:.4}",
        split.train.len(),
        split.held_out.len(),
        split.held_out_schemas
    );
    ensure!(g >= 0.90, "held-out auc below 0.90: {detail}");
    ensure!(g > r && r > a, "ordering violated: {detail}");
    Ok(detail)
}

fn trace_identity() -> Outcome {
    let schemas = toy_schemas();
    let seeds = default_seeds(&schemas, 40, 3);
    let pairs: Vec<SqlPair> = build_dataset(&seeds, &schemas, &DatasetConfig { n: 400, seed: 3, ..DatasetConfig::default() }).unwrap();
    let model = Arc::new(AnyModel::F32(GmnModel::new(Hyperparams::default(), 2)));
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut stepwise = 0;
    for k in 0..100 {
        let p = &pairs[r.gen_range(0..pairs.len())];
        let s = schema(&schemas, &p.schema_id);
        let scorer = [Scorer::Relpm, Scorer::Astpm, Scorer::Ex, Scorer::Gmn][k % 4];
        let mut c = RewardConfig::new(scorer);
        c.model = Some(Arc::clone(&model));
        c.db = Some(Arc::new(s.db.clone()));
        c.beta_kl = r.gen_range(0.0..0.5);
        let toks = tokenize(&p.candidate_sql).unwrap();
        let kl: Vec<f64> = (0..toks.len()).map(|_| r.gen_range(-2.0..2.0)).collect();
        let t = reward_trace(&toks, &p.candidate_sql, &p.reference_sql, &s.catalog, &c, Some(&kl)).map_err(|e| e.to_string())?;
        let expect = t.outcome.value + t.increments.iter().sum::<f64>() - c.beta_kl * kl.iter().sum::<f64>();
        let got: f64 = t.rewards.iter().sum();
        worst = worst.max((got - expect).abs());
        stepwise += usize::from(t.subquery_ends.len() > 1);
    }
    ensure!(worst <= 1e-9, "largest deviation {worst:e}");
    Ok(format!("100 traces ({stepwise} stepwise), largest deviation {worst:.1e}"))
}

fn checkpoint_round_trip() -> Outcome {
    let schemas = toy_schemas();
    let statements = corpus();
    let model = GmnModel::<f32>::new(Hyperparams::default(), 9);
    let back = match load_checkpoint(&save_checkpoint(&model)).map_err(|e| e.to_string())? {
        AnyModel::F32(m) => m,
        AnyModel::F64(_) => return Err("precision changed".into()),
    };
    let mut checked = 0;
    for w in statements.windows(2).step_by(31) {
        if checked == 10 {
            break;
        }
        let ((s1, a), (s2, b)) = (&w[0], &w[1]);
        let enc = |sid: &str, sql: &str| encode_rot(&rot_graph(sql, &schema(&schemas, sid).catalog, Side::Generated).unwrap(), 16);
        let (g1, g2) = (enc(s1, a), enc(s2, b));
        let x = model.forward_pair(&g1, &g2).unwrap().similarity;
        let y = back.forward_pair(&g1, &g2).unwrap().similarity;
        ensure!(x.to_bits() == y.to_bits(), "{x} vs {y}");
        checked += 1;
    }
    ensure!(checked == 10, "only {checked} pairs");
    Ok("10 pairs bit-identical".into())
}

fn parser_executor_fixtures() -> Outcome {
    let statements = corpus();
    ensure!(statements.len() >= 200, "corpus has {} statements", statements.len());
    for (_, sql) in &statements {
        let ast = parse(sql).map_err(|e| format!("{sql}: {e}"))?;
        let again = parse(&print_canonical(&ast)).map_err(|e| format!("{sql}: reprint fails: {e}"))?;
        ensure!(again == ast, "{sql}: reparse differs");
    }
    ensure!(CASES.len() >= 30, "{} exec fixtures", CASES.len());
    let (cat, db) = setup();
    for (sql, want) in CASES {
        let got = execute(sql, &db, &cat).map_err(|e| format!("{sql}: {e}"))?;
        let expected = ResultRelation { columns: Vec::new(), rows: expected_rows(want), ordered: got.ordered };
        ensure!(results_equal(&got, &expected), "{sql}: got {:?}", got.rows);
    }
    Ok(format!("{} statements round-trip, {} exec fixtures", statements.len(), CASES.len()))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 9] = [
        ("reward maps exact", 1, reward_maps),
        ("matching identities", 30, matching_identities),
        ("normalization equivalence", 30, normalization_equivalence),
        ("steprtm budget", 30, steprtm_budget),
        ("gmn numerics", 120, gmn_numerics),
        ("desk-scale learning", 600, desk_scale_learning),
        ("trace identity", 10, trace_identity),
        ("checkpoint round-trip", 5, checkpoint_round_trip),
        ("parser/executor fixtures", 30, parser_executor_fixtures),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let result = match result {
            Ok(d) if took > Duration::from_secs(*limit) => Err(format!("{d}; over the {limit} s limit")),
            other => other,
        };
        match result {
            Ok(d) => println!("criterion {n} PASS {name} ({:.2} s): {d}", took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("criterion {n} FAIL {name} ({:.2} s): {e}", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
