//! Small queries over a five-row table whose answers were worked out by hand.

use rotscore::exec::{Database, Value};
use rotscore::plan::{load_catalog, Catalog};
use serde_json::Value as Json;

pub const CATALOG: &str = r#"{"tables":[
 {"name":"emp","columns":[{"name":"id","type":"number"},{"name":"name","type":"text"},{"name":"dept","type":"number"},
  {"name":"salary","type":"number"},{"name":"mgr","type":"number"}],"primary_key":["id"],
  "foreign_keys":[{"column":"dept","ref_table":"dept","ref_column":"id"}]},
 {"name":"dept","columns":[{"name":"id","type":"number"},{"name":"dname","type":"text"}],"primary_key":["id"]}]}"#;

pub const DB: &str = r#"{"tables":{
 "emp":{"columns":["id","name","dept","salary","mgr"],"rows":[
  [1,"Ann",10,100,null],[2,"Bob",10,80,1],[3,"Cid",20,120,1],[4,"Dee",20,null,3],[5,"Eve",null,90,3]]},
 "dept":{"columns":["id","dname"],"rows":[[10,"Sales"],[20,"Eng"],[30,"Ops"]]}}}"#;

pub const CASES: &[(&str, &str)] = &[
    ("SELECT name FROM emp WHERE salary > 85 ORDER BY name", r#"[["Ann"],["Cid"],["Eve"]]"#),
    ("SELECT COUNT(*) FROM emp", "[[5]]"),
    ("SELECT COUNT(salary) FROM emp", "[[4]]"),
    ("SELECT SUM(salary) FROM emp", "[[390]]"),
    ("SELECT AVG(salary) FROM emp", "[[97.5]]"),
    ("SELECT MIN(salary), MAX(salary) FROM emp", "[[80, 120]]"),
    ("SELECT dept, COUNT(*) FROM emp GROUP BY dept ORDER BY dept", "[[null, 1], [10, 2], [20, 2]]"),
    (
        "SELECT e.name, d.dname FROM emp AS e JOIN dept AS d ON e.dept = d.id ORDER BY e.id",
        r#"[["Ann","Sales"],["Bob","Sales"],["Cid","Eng"],["Dee","Eng"]]"#,
    ),
    (
        "SELECT e.name, d.dname FROM emp AS e LEFT JOIN dept AS d ON e.dept = d.id ORDER BY e.id",
        r#"[["Ann","Sales"],["Bob","Sales"],["Cid","Eng"],["Dee","Eng"],["Eve",null]]"#,
    ),
    ("SELECT dname FROM dept WHERE id NOT IN (SELECT dept FROM emp WHERE dept IS NOT NULL)", r#"[["Ops"]]"#),
    ("SELECT name FROM emp WHERE salary IS NULL", r#"[["Dee"]]"#),
    ("SELECT name FROM emp WHERE mgr = 1 ORDER BY name", r#"[["Bob"],["Cid"]]"#),
    ("SELECT dept, SUM(salary) FROM emp GROUP BY dept HAVING SUM(salary) > 150", "[[10, 180]]"),
    ("SELECT name FROM emp ORDER BY salary DESC LIMIT 2", r#"[["Cid"],["Ann"]]"#),
    ("SELECT DISTINCT dept FROM emp WHERE dept IS NOT NULL ORDER BY dept", "[[10],[20]]"),
    ("SELECT name FROM emp WHERE salary BETWEEN 85 AND 110 ORDER BY name", r#"[["Ann"],["Eve"]]"#),
    ("SELECT name FROM emp WHERE name LIKE '%e%' ORDER BY name", r#"[["Dee"],["Eve"]]"#),
    ("SELECT name FROM emp WHERE salary > (SELECT AVG(salary) FROM emp) ORDER BY name", r#"[["Ann"],["Cid"]]"#),
    ("SELECT COUNT(DISTINCT dept) FROM emp", "[[2]]"),
    ("SELECT salary + 10 FROM emp WHERE id = 2", "[[90]]"),
    ("SELECT salary / 3 FROM emp WHERE id = 1", "[[33]]"),
    ("SELECT name FROM emp WHERE dept = 10 OR salary < 95 ORDER BY id", r#"[["Ann"],["Bob"],["Eve"]]"#),
    ("SELECT name FROM emp WHERE NOT dept = 10 ORDER BY id", r#"[["Cid"],["Dee"]]"#),
    (
        "SELECT d.dname, COUNT(e.id) FROM dept AS d LEFT JOIN emp AS e ON e.dept = d.id GROUP BY d.dname ORDER BY d.dname",
        r#"[["Eng",2],["Ops",0],["Sales",2]]"#,
    ),
    (
        "SELECT m.name, COUNT(*) FROM emp AS e JOIN emp AS m ON e.mgr = m.id GROUP BY m.name ORDER BY m.name",
        r#"[["Ann",2],["Cid",2]]"#,
    ),
    ("WITH hi AS (SELECT * FROM emp WHERE salary >= 100) SELECT COUNT(*) FROM hi", "[[2]]"),
    ("SELECT name FROM (SELECT name, salary FROM emp WHERE dept = 20) AS t WHERE salary IS NOT NULL", r#"[["Cid"]]"#),
    ("SELECT name FROM emp WHERE dept IN (SELECT id FROM dept WHERE dname = 'Eng') ORDER BY name", r#"[["Cid"],["Dee"]]"#),
    ("SELECT MAX(salary) FROM emp WHERE dept = 30", "[[null]]"),
    ("SELECT COUNT(*) FROM emp WHERE dept = 30", "[[0]]"),
    ("SELECT name, salary FROM emp ORDER BY salary", r#"[["Dee",null],["Bob",80],["Eve",90],["Ann",100],["Cid",120]]"#),
    ("SELECT dept, AVG(salary) FROM emp WHERE dept IS NOT NULL GROUP BY dept ORDER BY dept", "[[10, 90.0], [20, 120.0]]"),
];

pub fn setup() -> (Catalog, Database) {
    let cat = load_catalog(CATALOG).unwrap();
    let db = Database::from_json(DB, &cat).unwrap();
    (cat, db)
}

pub fn to_value(j: &Json) -> Value {
    match j {
        Json::Null => Value::Null,
        Json::Number(n) => n.as_i64().map(Value::Integer).unwrap_or_else(|| Value::Real(n.as_f64().unwrap())),
        Json::String(s) => Value::Text(s.clone()),
        other => panic!("unexpected cell {other}"),
    }
}

pub fn expected_rows(want: &str) -> Vec<Vec<Value>> {
    serde_json::from_str::<Vec<Vec<Json>>>(want).unwrap().iter().map(|r| r.iter().map(to_value).collect()).collect()
}
