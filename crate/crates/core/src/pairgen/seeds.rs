//! Random seed queries drawn from a schema's tables and stored values.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{execute, Value};
use crate::fixtures::ToySchema;
use crate::plan::{ColumnType, Table};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Seed {
    pub schema_id: String,
    pub sql: String,
}

fn literal(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::Integer(i) => Some(i.to_string()),
        Value::Real(r) => Some(crate::sql::format_real(*r)),
        Value::Text(s) => Some(format!("'{}'", s.replace('\'', "''"))),
    }
}

struct Ctx<'a> {
    schema: &'a ToySchema,
    rng: ChaCha8Rng,
}

impl Ctx<'_> {
    fn values(&self, table: &str, col: usize) -> Vec<Value> {
        self.schema.db.rows(table).unwrap_or_default().iter().map(|r| r[col].clone()).filter(|v| !v.is_null()).collect()
    }

    fn value(&mut self, t: &Table, col: usize) -> Option<String> {
        let vals = self.values(&t.name, col);
        literal(vals.choose(&mut self.rng)?)
    }

    fn atom(&mut self, t: &Table, q: &str) -> Option<String> {
        let ci = self.rng.gen_range(0..t.columns.len());
        let c = &t.columns[ci];
        let name = format!("{q}{}", c.name);
        let numeric = c.ty == ColumnType::Number;
        let roll = self.rng.gen_range(0..100);
        Some(match roll {
            0..=39 => {
                let ops: &[&str] = if numeric { &[">", ">=", "<", "<=", "=", "!="] } else { &["=", "!=", "=", ">"] };
                format!("{name} {} {}", ops.choose(&mut self.rng)?, self.value(t, ci)?)
            }
            40..=69 => {
                let mut vals: Vec<String> = self.values(&t.name, ci).iter().filter_map(literal).collect::<BTreeSet<_>>().into_iter().collect();
                vals.shuffle(&mut self.rng);
                let k = self.rng.gen_range(2..=3).min(vals.len());
                if k == 0 {
                    return None;
                }
                let neg = if self.rng.gen_bool(0.15) { "NOT " } else { "" };
                format!("{name} {neg}IN ({})", vals[..k].join(", "))
            }
            70..=79 if numeric => {
                let (a, b) = (self.value(t, ci)?, self.value(t, ci)?);
                let (x, y): (f64, f64) = (a.parse().ok()?, b.parse().ok()?);
                let (lo, hi) = if x <= y { (a, b) } else { (b, a) };
                format!("{name} BETWEEN {lo} AND {hi}")
            }
            70..=89 if !numeric => {
                let vals = self.values(&t.name, ci);
                let Value::Text(s) = vals.choose(&mut self.rng)? else { return None };
                let chars: Vec<char> = s.chars().collect();
                if chars.len() < 3 {
                    return None;
                }
                let len = self.rng.gen_range(2..=3.min(chars.len()));
                let start = self.rng.gen_range(0..=chars.len() - len);
                let sub: String = chars[start..start + len].iter().collect();
                if sub.contains('%') || sub.contains('_') || sub.contains('\'') {
                    return None;
                }
                format!("{name} LIKE '%{sub}%'")
            }
            _ => {
                let ops = [">", "<", "="];
                format!("{name} {} {}", ops.choose(&mut self.rng)?, self.value(t, ci)?)
            }
        })
    }

    fn predicate(&mut self, t: &Table, q: &str) -> Option<String> {
        let n = *[1, 2, 2, 3].choose(&mut self.rng)?;
        let mut atoms = Vec::new();
        for _ in 0..n {
            atoms.push(self.atom(t, q)?);
        }
        let mut out = atoms[0].clone();
        for a in &atoms[1..] {
            let op = if self.rng.gen_bool(0.6) { "AND" } else { "OR" };
            out = if op == "OR" && self.rng.gen_bool(0.5) && atoms.len() > 2 {
                format!("({out} OR {a})")
            } else {
                format!("{out} {op} {a}")
            };
        }
        Some(out)
    }

    fn columns(&mut self, t: &Table, q: &str, max: usize) -> Vec<String> {
        let mut cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
        cols.shuffle(&mut self.rng);
        let k = self.rng.gen_range(1..=max.min(cols.len()));
        cols[..k].iter().map(|c| format!("{q}{c}")).collect()
    }

    fn numeric(&mut self, t: &Table) -> Option<String> {
        let nums: Vec<&str> = t.columns.iter().filter(|c| c.ty == ColumnType::Number).map(|c| c.name.as_str()).collect();
        nums.choose(&mut self.rng).map(|s| s.to_string())
    }

    fn query(&mut self) -> Option<String> {
        let tables: Vec<&Table> =
            self.schema.catalog.tables.iter().filter(|t| self.schema.db.rows(&t.name).is_some_and(|r| !r.is_empty())).collect();
        let t = *tables.choose(&mut self.rng)?;
        let tn = &t.name;
        Some(match self.rng.gen_range(0..100) {
            0..=29 => format!("SELECT {} FROM {tn} WHERE {}", self.columns(t, "", 3).join(", "), self.predicate(t, "")?),
            30..=39 => format!("SELECT * FROM {tn} WHERE {}", self.predicate(t, "")?),
            40..=49 => {
                let inner = self.columns(t, "", 4);
                let narrowed = Table {
                    columns: t.columns.iter().filter(|c| inner.contains(&c.name)).cloned().collect(),
                    ..t.clone()
                };
                let outer = self.columns(&narrowed, "", 2);
                format!("SELECT {} FROM (SELECT {} FROM {tn}) AS t WHERE {}", outer.join(", "), inner.join(", "), self.predicate(&narrowed, "")?)
            }
            50..=61 => {
                let order = self.columns(t, "", 1).remove(0);
                let dir = if self.rng.gen_bool(0.5) { " DESC" } else { "" };
                format!(
                    "SELECT {} FROM {tn} WHERE {} ORDER BY {order}{dir} LIMIT {}",
                    self.columns(t, "", 2).join(", "),
                    self.predicate(t, "")?,
                    self.rng.gen_range(1..=5)
                )
            }
            62..=77 => {
                let fk = t.foreign_keys.choose(&mut self.rng)?;
                let other = self.schema.catalog.table(&fk.ref_table)?;
                let mut cols = self.columns(t, "a.", 2);
                cols.extend(self.columns(other, "b.", 1));
                let pred = if self.rng.gen_bool(0.5) { self.predicate(t, "a.")? } else { self.predicate(other, "b.")? };
                format!(
                    "SELECT {} FROM {tn} AS a JOIN {} AS b ON a.{} = b.{} WHERE {pred}",
                    cols.join(", "),
                    other.name,
                    fk.column,
                    fk.ref_column
                )
            }
            78..=89 => {
                let g = self.columns(t, "", 1).remove(0);
                let having = if self.rng.gen_bool(0.4) { " HAVING COUNT(*) > 1".to_string() } else { String::new() };
                format!("SELECT {g}, COUNT(*) FROM {tn} WHERE {} GROUP BY {g}{having}", self.predicate(t, "")?)
            }
            _ => {
                let n = self.numeric(t)?;
                let op = *[">", ">=", "<", "<="].choose(&mut self.rng)?;
                format!(
                    "SELECT {} FROM {tn} WHERE {n} {op} (SELECT AVG({n}) FROM {tn}) AND {}",
                    self.columns(t, "", 2).join(", "),
                    self.predicate(t, "")?
                )
            }
        })
    }
}

/// Up to `count` distinct seeds that execute on the schema's database and
/// return at least one row.
pub fn synthesize_seeds(schema: &ToySchema, count: usize, rng_seed: u64) -> Vec<Seed> {
    let mut ctx = Ctx { schema, rng: ChaCha8Rng::seed_from_u64(rng_seed) };
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < count * 20 {
        attempts += 1;
        let Some(sql) = ctx.query() else { continue };
        if seen.contains(&sql) {
            continue;
        }
        match execute(&sql, &schema.db, &schema.catalog) {
            Ok(r) if !r.rows.is_empty() => {
                seen.insert(sql.clone());
                out.push(Seed { schema_id: schema.id.to_string(), sql });
            }
            _ => {}
        }
    }
    out
}
