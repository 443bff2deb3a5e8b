use rotscore::exec::{execute, execute_rel, results_equal};
use rotscore::fixtures::{toy_schema, toy_schemas};
use rotscore::plan::{
    load_catalog, lower, normalize, plan_sql, rot_as_graph, rot_as_tree, Catalog, EdgeKind, PlanError, Rel, RotErrorClass,
    RotGraph, DEFAULT_POSITION_DIM,
};
use rotscore::sql::parse;

fn singer() -> Catalog {
    toy_schema("singer").unwrap().catalog
}

fn users() -> Catalog {
    load_catalog(
        r#"{"tables":[{"name":"users","columns":[{"name":"id","type":"number"},{"name":"name","type":"text"}],"primary_key":["id"]}]}"#,
    )
    .unwrap()
}

fn graph(sql: &str, cat: &Catalog) -> RotGraph {
    RotGraph::from_rel(&plan_sql(sql, cat).unwrap())
}

#[test]
fn missing_cte_column_is_unresolved() {
    let q = parse("WITH sub1 AS (SELECT id, name FROM users) SELECT age FROM sub1").unwrap();
    let err = lower(&q, &users()).unwrap_err();
    assert_eq!(err.class, RotErrorClass::UnresolvedColumn);
    assert!(err.message.contains("age"));
}

#[test]
fn unknown_table_and_ambiguity() {
    let cat = singer();
    let e = lower(&parse("SELECT x FROM nowhere").unwrap(), &cat).unwrap_err();
    assert_eq!(e.class, RotErrorClass::UnresolvedTable);
    assert!(e.message.contains("nowhere"));
    let e = lower(&parse("SELECT singer_id FROM singer JOIN song ON singer.singer_id = song.singer_id").unwrap(), &cat)
        .unwrap_err();
    assert_eq!(e.class, RotErrorClass::AmbiguousName);
    assert!(e.message.contains("singer_id"));
}

#[test]
fn minimal_scan_project_chain() {
    let rel = lower(&parse("SELECT name FROM singer").unwrap(), &singer()).unwrap();
    match rel {
        Rel::Project { input, exprs } => {
            assert_eq!(exprs.len(), 1);
            assert!(matches!(*input, Rel::Scan { ref table, .. } if table == "singer"));
        }
        other => panic!("expected Project, got {}", other.render()),
    }
}

#[test]
fn not_in_subquery_snapshot() {
    let g = graph("SELECT Name FROM singer WHERE Singer_ID NOT IN (SELECT Singer_ID FROM song)", &singer());
    let expected = "\
Project
  Filter
    TableScan[singer]
    InSubquery[anti]
      Column[singer.singer_id]
      Project
        TableScan[song]
        Column[song.singer_id]
  Column[singer.name]
";
    assert_eq!(g.render(), expected);
}

#[test]
fn negated_membership_forms_coincide() {
    let cat = singer();
    let a = plan_sql("SELECT Name FROM singer WHERE Singer_ID NOT IN (SELECT Singer_ID FROM song)", &cat).unwrap();
    let b = plan_sql("SELECT name FROM singer WHERE NOT singer_id IN (SELECT singer_id FROM song)", &cat).unwrap();
    assert_eq!(a, b);
}

#[test]
fn in_list_equals_disjunction() {
    let cat = singer();
    let a = plan_sql("SELECT name FROM singer WHERE singer_id IN (36, 37)", &cat).unwrap();
    let b = plan_sql("SELECT name FROM singer WHERE singer_id = 36 OR singer_id = 37", &cat).unwrap();
    assert_eq!(a, b);
    assert_eq!(rot_as_tree(&RotGraph::from_rel(&a)), rot_as_tree(&RotGraph::from_rel(&b)));
}

#[test]
fn stacked_filters_merge_into_sorted_conjunction() {
    let cat = singer();
    // the derived table collapses once its identity projection is removed
    let stacked = plan_sql(
        "SELECT name FROM (SELECT * FROM singer WHERE birth_year > 1960) AS s WHERE citizenship = 'France'",
        &cat,
    )
    .unwrap();
    let flat = plan_sql("SELECT name FROM singer WHERE citizenship = 'France' AND birth_year > 1960", &cat).unwrap();
    assert_eq!(stacked, flat);
    let text = flat.render();
    assert_eq!(text.matches("Filter").count(), 1, "{text}");
}

#[test]
fn between_expands_to_comparisons() {
    let cat = singer();
    let a = plan_sql("SELECT name FROM singer WHERE birth_year BETWEEN 1960 AND 1970", &cat).unwrap();
    let b = plan_sql("SELECT name FROM singer WHERE birth_year <= 1970 AND birth_year >= 1960", &cat).unwrap();
    assert_eq!(a, b);
}

#[test]
fn comparison_direction_pair_differs_in_one_label() {
    let cat = singer();
    let cat_sql = |op: &str| format!("SELECT name FROM singer WHERE birth_year {op} 34");
    let a = rot_as_tree(&graph(&cat_sql(">"), &cat));
    let b = rot_as_tree(&graph(&cat_sql(">="), &cat));
    assert_eq!(a.len(), b.len());
    let differing = (0..a.len()).filter(|&i| a.label(i) != b.label(i)).count();
    assert_eq!(differing, 1);
}

#[test]
fn select_one_node_count() {
    // Project -> Values, Literal 1
    let g = graph("SELECT 1", &Catalog::default());
    assert_eq!(g.nodes.len(), 3);
    assert_eq!(g.edges.iter().filter(|e| e.2 == EdgeKind::Child).count(), 2);
}

#[test]
fn single_scan_encodes_one_node() {
    let g = graph("SELECT * FROM song", &singer());
    let enc = rot_as_graph(&g, DEFAULT_POSITION_DIM);
    assert_eq!(enc.nodes.len(), 1);
    assert!(enc.edges.is_empty());
}

#[test]
fn filter_has_data_flow_from_scan() {
    let g = graph("SELECT * FROM song WHERE sales > 10", &singer());
    let scan = g.nodes.iter().position(|n| n.kind == "TableScan").unwrap();
    let col = g.nodes.iter().position(|n| n.kind == "Column").unwrap();
    assert!(g.edges.contains(&(scan, col, EdgeKind::DataFlow)));
}

#[test]
fn alias_renaming_is_invisible() {
    let cat = singer();
    let a = "SELECT T1.name FROM singer AS T1 JOIN song AS T2 ON T1.singer_id = T2.singer_id WHERE T2.sales > 5";
    let b = "SELECT x.name FROM singer AS x JOIN song AS y ON x.singer_id = y.singer_id WHERE y.sales > 5";
    let (ga, gb) = (graph(a, &cat), graph(b, &cat));
    assert_eq!(ga, gb);
    assert_eq!(rot_as_graph(&ga, DEFAULT_POSITION_DIM), rot_as_graph(&gb, DEFAULT_POSITION_DIM));
}

#[test]
fn inner_join_inputs_are_ordered() {
    let cat = singer();
    let a = plan_sql("SELECT song.title FROM singer JOIN song ON singer.singer_id = song.singer_id", &cat).unwrap();
    let b = plan_sql("SELECT song.title FROM song JOIN singer ON song.singer_id = singer.singer_id", &cat).unwrap();
    assert_eq!(a, b);
}

#[test]
fn syntax_errors_surface_as_plan_errors() {
    assert!(matches!(plan_sql("SELEC 1", &singer()), Err(PlanError::Syntax(_))));
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

#[test]
fn normalization_is_idempotent_on_corpus() {
    for (sid, sql) in corpus() {
        let cat = toy_schema(&sid).unwrap().catalog;
        let once = plan_sql(&sql, &cat).unwrap();
        assert_eq!(normalize(&once), once, "{sql}");
    }
}

#[test]
fn normalization_preserves_results_on_corpus() {
    let schemas = toy_schemas();
    for (sid, sql) in corpus() {
        let s = schemas.iter().find(|s| s.id == sid).unwrap();
        let raw = lower(&parse(&sql).unwrap(), &s.catalog).unwrap();
        let mut before = execute(&sql, &s.db, &s.catalog).unwrap();
        before.ordered = false;
        let after = execute_rel(&normalize(&raw), &s.db).unwrap();
        assert!(results_equal(&before, &after), "{sql}\n{:?}\n{:?}", before.rows, after.rows);
    }
}

#[test]
fn every_scan_column_resolves_in_catalog() {
    for (sid, sql) in corpus() {
        let cat = toy_schema(&sid).unwrap().catalog;
        let g = graph(&sql, &cat);
        for &(src, dst, kind) in &g.edges {
            if kind != EdgeKind::DataFlow || g.nodes[src].kind != "TableScan" {
                continue;
            }
            let (t, c) = g.nodes[dst].attr.split_once('.').unwrap();
            assert_eq!(t, g.nodes[src].attr, "{sql}");
            assert!(cat.table(t).and_then(|tb| tb.column(c)).is_some(), "{sql}: {t}.{c}");
        }
    }
}
