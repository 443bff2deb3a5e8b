use rotscore::fixtures::toy_schema;
use rotscore::matching::{relpm_report, DEFAULT_ALPHA};
use rotscore::plan::{plan_sql, RotGraph};
use rotscore::steprtm::{segment_cte, step_query, step_rewards, step_rot, StepError};
use rotscore::plan::RotErrorClass;

const POSTS_CTE: &str = "WITH UserInfo AS ( SELECT id FROM users WHERE displayname = 'Stephen Turner'), \
PostInfo AS ( SELECT score FROM posts WHERE owneruserid IN (SELECT id FROM UserInfo)) SELECT AVG(score) FROM PostInfo";
const POSTS_REF: &str = "SELECT AVG(T2.Score) FROM users AS T1 INNER JOIN posts AS T2 ON T1.Id = T2.OwnerUserId \
WHERE T1.DisplayName = 'Stephen Turner'";

fn forum() -> rotscore::plan::Catalog {
    toy_schema("forum").unwrap().catalog
}

#[test]
fn three_step_listing_indices() {
    let s = segment_cte(POSTS_CTE).unwrap();
    assert_eq!(s.len(), 3);
    let names: Vec<_> = s.segments.iter().map(|x| x.name.clone()).collect();
    assert_eq!(names, vec![Some("userinfo".to_string()), Some("postinfo".to_string()), None]);
    let toks = rotscore::sql::tokenize(POSTS_CTE).unwrap();
    assert_eq!(toks[s.segments[0].end_token].lexeme, ")");
    assert_eq!(toks[s.segments[1].end_token].lexeme, ")");
    assert_eq!(s.segments[2].end_token, toks.len() - 1);
}

#[test]
fn first_step_is_star_projection_over_body() {
    let cat = forum();
    let s = segment_cte(POSTS_CTE).unwrap();
    let step = step_rot(&s, 0, &cat).unwrap();
    let direct = RotGraph::from_rel(&plan_sql("SELECT * FROM (SELECT id FROM users WHERE displayname = 'Stephen Turner') AS x", &cat).unwrap());
    assert_eq!(step, direct);
}

#[test]
fn final_step_equals_full_statement() {
    let cat = forum();
    let s = segment_cte(POSTS_CTE).unwrap();
    assert_eq!(step_rot(&s, 2, &cat).unwrap(), RotGraph::from_rel(&plan_sql(POSTS_CTE, &cat).unwrap()));
}

#[test]
fn forward_reference_is_unresolved() {
    let cat = forum();
    let sql = "WITH a AS (SELECT id FROM users), b AS (SELECT id FROM a) SELECT id FROM b";
    let s = segment_cte(sql).unwrap();
    assert!(step_rot(&s, 1, &cat).is_ok());
    // swap bodies so that the first step reads the second
    let bad = "WITH a AS (SELECT id FROM b), b AS (SELECT id FROM users) SELECT id FROM a";
    // the full statement fails to plan as well, but segmentation only needs syntax
    let s = segment_cte(bad).unwrap();
    match step_rot(&s, 0, &cat) {
        Err(StepError::Rot(e)) => assert_eq!(e.class, RotErrorClass::UnresolvedTable),
        other => panic!("{other:?}"),
    }
    assert_eq!(step_query(&s, 0), "WITH a AS (SELECT id FROM b) SELECT * FROM a");
}

#[test]
fn posts_trace_increases_strictly() {
    let t = step_rewards(POSTS_CTE, POSTS_REF, &forum(), DEFAULT_ALPHA).unwrap();
    let c: Vec<f64> = t.steps.iter().map(|s| s.coverage).collect();
    assert_eq!(c.len(), 3);
    assert!(c[0] > 0.0 && c[0] < c[1] && c[1] < c[2] && c[2] <= 1.0, "{c:?}");
    // Reference preorder: Aggregate, Filter, Join, Scan posts, Scan users,
    // Compare(owneruserid, id), two Columns, Compare(literal, displayname),
    // Literal, Column, AggCall, Column score.
    // Step 1 covers Filter, Scan users, users.id and the name predicate (6);
    // step 2 adds Scan posts, owneruserid and score (9); the final step adds
    // Aggregate and AggCall (11). Join and its condition stay uncovered.
    let covered: Vec<usize> = t.steps.iter().map(|s| s.covered).collect();
    assert_eq!((covered, t.reference_nodes), (vec![6, 9, 11], 13));
}

#[test]
fn identical_single_segment_is_full_coverage() {
    let t = step_rewards(POSTS_REF, POSTS_REF, &forum(), DEFAULT_ALPHA).unwrap();
    assert_eq!(t.steps.len(), 1);
    assert_eq!((t.steps[0].coverage, t.steps[0].increment), (1.0, 1.0));
}

#[test]
fn disjoint_labels_earn_nothing() {
    let t = step_rewards("WITH a AS (SELECT 7) SELECT 8", "SELECT * FROM users", &forum(), DEFAULT_ALPHA).unwrap();
    assert!(t.steps.iter().all(|s| s.increment == 0.0), "{t:?}");
}

#[test]
fn replayed_step_earns_zero() {
    let body = "SELECT id FROM users WHERE displayname = 'Stephen Turner'";
    let gen = format!("WITH a AS ({body}), b AS ({body}) SELECT id FROM b");
    let t = step_rewards(&gen, POSTS_REF, &forum(), DEFAULT_ALPHA).unwrap();
    assert!(t.steps[0].increment > 0.0);
    assert_eq!(t.steps[1].increment, 0.0);
}

#[test]
fn failed_segment_contributes_nothing() {
    let gen = "WITH a AS (SELECT nope FROM users), b AS (SELECT id FROM users) SELECT id FROM b";
    let t = step_rewards(gen, POSTS_REF, &forum(), DEFAULT_ALPHA).unwrap();
    assert_eq!(t.steps[0].increment, 0.0);
    assert!(t.steps[0].error.is_some());
    assert!(t.steps[1].increment > 0.0);
}

#[test]
fn single_segment_matches_recall() {
    let cat = toy_schema("store").unwrap().catalog;
    let gen = "SELECT name FROM customers WHERE credit > 500";
    let reference = "SELECT name, city FROM customers WHERE credit >= 500";
    let t = step_rewards(gen, reference, &cat, DEFAULT_ALPHA).unwrap();
    let m = relpm_report(gen, reference, &cat, DEFAULT_ALPHA, 2.0).unwrap();
    assert_eq!(t.steps[0].coverage, m.recall);
}

mod properties {
    use super::*;
    use proptest::prelude::*;
    use rotscore::fixtures::toy_schemas;
    use rotscore::pairgen::{generate, synthesize_seeds, Generator};

    fn cte_pairs() -> &'static Vec<(usize, String, String)> {
        static PAIRS: std::sync::OnceLock<Vec<(usize, String, String)>> = std::sync::OnceLock::new();
        PAIRS.get_or_init(|| {
            let mut out = Vec::new();
            for (i, s) in toy_schemas().iter().enumerate() {
                for (k, seed) in synthesize_seeds(s, 60, i as u64).iter().enumerate() {
                    if let Ok(p) = generate(&seed.sql, &s.catalog, None, &Generator::CteRewrite, k as u64) {
                        out.push((i, p.candidate_sql, p.reference_sql));
                    }
                }
            }
            out
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]

        #[test]
        fn coverage_is_monotone_and_budgeted(idx in any::<prop::sample::Index>()) {
            let pairs = cte_pairs();
            prop_assert!(pairs.len() >= 100);
            let (si, gen, reference) = &pairs[idx.index(pairs.len())];
            let cat = &toy_schemas()[*si].catalog;
            let t = step_rewards(gen, reference, cat, DEFAULT_ALPHA).unwrap();
            prop_assert!(t.steps.len() >= 2);
            let mut prev = 0.0;
            for s in &t.steps {
                prop_assert!(s.increment >= 0.0);
                prop_assert!(s.coverage >= prev);
                prev = s.coverage;
            }
            let sum: f64 = t.steps.iter().map(|s| s.increment).sum();
            prop_assert!((sum - t.total()).abs() < 1e-12);
            prop_assert!(t.total() <= 1.0);
        }

        #[test]
        fn duplicated_step_earns_nothing(idx in any::<prop::sample::Index>()) {
            let pairs = cte_pairs();
            let (si, gen, reference) = &pairs[idx.index(pairs.len())];
            let cat = &toy_schemas()[*si].catalog;
            let seg = segment_cte(gen).unwrap();
            let n = seg.len();
            let mut defs = vec![format!("{} AS ({})", seg.segments[0].name.as_deref().unwrap(), seg.body(0))];
            defs.push(format!("replay AS ({})", seg.body(0)));
            for i in 1..n - 1 {
                defs.push(format!("{} AS ({})", seg.segments[i].name.as_deref().unwrap(), seg.body(i)));
            }
            let replayed = format!("WITH {} {}", defs.join(", "), seg.body(n - 1));
            let t = step_rewards(&replayed, reference, cat, DEFAULT_ALPHA).unwrap();
            prop_assert_eq!(t.steps[1].increment, 0.0);
            let orig = step_rewards(gen, reference, cat, DEFAULT_ALPHA).unwrap();
            prop_assert!((t.total() - orig.total()).abs() < 1e-12);
        }
    }
}
