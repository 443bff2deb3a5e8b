//! Single-pair augmentation: the seven rewrite strategies and the CTE
//! rewrite used as a second source of equivalent pairs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::visit::{apply_nth_expr, count_exprs, exprs_mut, factors_mut};
use super::{AugmentError, SqlPair};
use crate::exec::{execute, results_equal, Database};
use crate::plan::{lower, Catalog};
use crate::sql::ast::{BinaryOp, Cte, Expr, FromClause, Ident, Query, Select, SelectItem, SetExpr, TableFactor, UnaryOp};
use crate::sql::{parse, print_canonical};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    InClauseReplacement,
    ColumnNamePerturbation,
    AndOrSwap,
    ComparisonOperatorSwap,
    TableSourceReplacement,
    ColumnNameReplacement,
    ColumnRemoval,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::InClauseReplacement,
        Strategy::ColumnNamePerturbation,
        Strategy::AndOrSwap,
        Strategy::ComparisonOperatorSwap,
        Strategy::TableSourceReplacement,
        Strategy::ColumnNameReplacement,
        Strategy::ColumnRemoval,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::InClauseReplacement => "in-clause-replacement",
            Strategy::ColumnNamePerturbation => "column-name-perturbation",
            Strategy::AndOrSwap => "and-or-swap",
            Strategy::ComparisonOperatorSwap => "comparison-operator-swap",
            Strategy::TableSourceReplacement => "table-source-replacement",
            Strategy::ColumnNameReplacement => "column-name-replacement",
            Strategy::ColumnRemoval => "column-removal",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|s| s.tag() == tag)
    }

    /// 1 when the rewrite preserves meaning.
    pub fn label(self) -> u8 {
        u8::from(self == Strategy::InClauseReplacement)
    }
}

const COMPARISONS: [BinaryOp; 6] = [BinaryOp::Eq, BinaryOp::NotEq, BinaryOp::Lt, BinaryOp::LtEq, BinaryOp::Gt, BinaryOp::GtEq];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub strategy: Strategy,
    /// Single-character edits applied by column-name perturbation.
    #[serde(default = "one")]
    pub edits: usize,
    /// Replacement operators for the comparison swap.
    #[serde(default = "comparison_pool")]
    pub operator_pool: Vec<BinaryOp>,
}

fn one() -> usize {
    1
}

fn comparison_pool() -> Vec<BinaryOp> {
    COMPARISONS.to_vec()
}

impl StrategySpec {
    pub fn new(strategy: Strategy) -> Self {
        StrategySpec { strategy, edits: 1, operator_pool: comparison_pool() }
    }
}

impl From<Strategy> for StrategySpec {
    fn from(s: Strategy) -> Self {
        StrategySpec::new(s)
    }
}

fn not_applicable(spec: &StrategySpec) -> AugmentError {
    AugmentError::NotApplicable(spec.strategy.tag().to_string())
}

fn pick_site(q: &Query, rng: &mut ChaCha8Rng, matches: &dyn Fn(&Expr) -> bool) -> Option<usize> {
    let n = count_exprs(q, matches);
    (n > 0).then(|| rng.gen_range(0..n))
}

fn in_clause(q: &mut Query, rng: &mut ChaCha8Rng) -> bool {
    let is_in = |e: &Expr| matches!(e, Expr::InList { list, .. } if !list.is_empty());
    let Some(k) = pick_site(q, rng, &is_in) else { return false };
    apply_nth_expr(q, &is_in, k, &mut |e| {
        let Expr::InList { expr, list, negated } = e.clone() else { unreachable!() };
        let (cmp, join) = if negated { (BinaryOp::NotEq, BinaryOp::And) } else { (BinaryOp::Eq, BinaryOp::Or) };
        *e = list
            .into_iter()
            .map(|v| Expr::binary(cmp, (*expr).clone(), v))
            .reduce(|a, b| Expr::binary(join, a, b))
            .expect("non-empty list");
    });
    true
}

fn all_column_names(catalog: &Catalog) -> BTreeSet<&str> {
    catalog.tables.iter().flat_map(|t| t.columns.iter().map(|c| c.name.as_str())).collect()
}

fn single_edits(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut out = BTreeSet::new();
    for i in 0..chars.len() {
        let mut c = chars.clone();
        c.remove(i);
        out.insert(c.into_iter().collect::<String>());
    }
    for i in 0..chars.len().saturating_sub(1) {
        let mut c = chars.clone();
        c.swap(i, i + 1);
        out.insert(c.into_iter().collect::<String>());
    }
    out.remove(name);
    out.into_iter()
        .filter(|s| s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_'))
        .collect()
}

fn projection_columns(q: &Query) -> usize {
    match &q.body {
        SetExpr::Select(s) => s
            .projection
            .iter()
            .filter(|i| matches!(i, SelectItem::Expr { expr: Expr::Column { .. }, .. }))
            .count(),
        _ => 0,
    }
}

fn perturb_column(q: &mut Query, catalog: &Catalog, edits: usize, rng: &mut ChaCha8Rng) -> bool {
    let real = all_column_names(catalog);
    let edit = |name: &str, rng: &mut ChaCha8Rng| -> Option<String> {
        let mut cur = name.to_string();
        for _ in 0..edits.max(1) {
            let options: Vec<String> = single_edits(&cur).into_iter().filter(|s| !real.contains(s.as_str())).collect();
            cur = options.choose(rng)?.clone();
        }
        Some(cur)
    };
    // prefer the select clause, as in the observed failure cases
    let n = projection_columns(q);
    if n > 0 {
        let k = rng.gen_range(0..n);
        let SetExpr::Select(s) = &mut q.body else { unreachable!() };
        let item = s
            .projection
            .iter_mut()
            .filter_map(|i| match i {
                SelectItem::Expr { expr: Expr::Column { name, .. }, .. } => Some(name),
                _ => None,
            })
            .nth(k)
            .expect("counted");
        let Some(new) = edit(item.as_str(), rng) else { return false };
        *item = Ident::new(new);
        return true;
    }
    let is_col = |e: &Expr| matches!(e, Expr::Column { .. });
    let Some(k) = pick_site(q, rng, &is_col) else { return false };
    let mut ok = false;
    apply_nth_expr(q, &is_col, k, &mut |e| {
        if let Expr::Column { name, .. } = e {
            if let Some(new) = edit(name.as_str(), rng) {
                *name = Ident::new(new);
                ok = true;
            }
        }
    });
    ok
}

fn and_or_swap(q: &mut Query, rng: &mut ChaCha8Rng) -> bool {
    let is_logic = |e: &Expr| matches!(e, Expr::Binary { op: BinaryOp::And | BinaryOp::Or, .. });
    let Some(k) = pick_site(q, rng, &is_logic) else { return false };
    apply_nth_expr(q, &is_logic, k, &mut |e| {
        if let Expr::Binary { op, .. } = e {
            *op = if *op == BinaryOp::And { BinaryOp::Or } else { BinaryOp::And };
        }
    });
    true
}

fn comparison_swap(q: &mut Query, pool: &[BinaryOp], rng: &mut ChaCha8Rng) -> bool {
    let is_cmp = |e: &Expr| matches!(e, Expr::Binary { op, .. } if op.is_comparison());
    let Some(k) = pick_site(q, rng, &is_cmp) else { return false };
    let mut ok = false;
    apply_nth_expr(q, &is_cmp, k, &mut |e| {
        if let Expr::Binary { op, .. } = e {
            let options: Vec<BinaryOp> = pool.iter().copied().filter(|p| p != op && p.is_comparison()).collect();
            if let Some(&new) = options.choose(rng) {
                *op = new;
                ok = true;
            }
        }
    });
    ok
}

fn cte_names(q: &Query) -> BTreeSet<String> {
    q.with.iter().map(|c| c.name.0.clone()).collect()
}

fn table_source(q: &mut Query, catalog: &Catalog, rng: &mut ChaCha8Rng) -> bool {
    let ctes = cte_names(q);
    let mut tables = Vec::new();
    factors_mut(q, &mut |t| {
        if let TableFactor::Table { name, .. } = t {
            if !ctes.contains(name.as_str()) && catalog.table(name.as_str()).is_some() {
                tables.push(name.0.clone());
            }
        }
    });
    if tables.is_empty() || catalog.tables.len() < 2 {
        return false;
    }
    let k = rng.gen_range(0..tables.len());
    let orig = catalog.table(&tables[k]).expect("checked");
    let cols: BTreeSet<&str> = orig.columns.iter().map(|c| c.name.as_str()).collect();
    let overlap = |t: &crate::plan::Table| t.columns.iter().filter(|c| cols.contains(c.name.as_str())).count();
    let others: Vec<_> = catalog.tables.iter().filter(|t| t.name != orig.name).collect();
    let best = others.iter().map(|t| overlap(t)).max().unwrap_or(0);
    let choices: Vec<&str> = others.iter().filter(|t| overlap(t) == best).map(|t| t.name.as_str()).collect();
    let replacement = Ident::new(choices.choose(rng).expect("non-empty"));
    let mut seen = 0;
    factors_mut(q, &mut |t| {
        if let TableFactor::Table { name, alias } = t {
            if !ctes.contains(name.as_str()) && catalog.table(name.as_str()).is_some() {
                if seen == k {
                    // qualifiers written with the old table name keep resolving
                    if alias.is_none() {
                        *alias = Some(name.clone());
                    }
                    *name = replacement.clone();
                }
                seen += 1;
            }
        }
    });
    true
}

/// Catalog table a column reference reads, when it names a base table.
fn column_table<'c>(q: &Query, catalog: &'c Catalog, table: Option<&Ident>, name: &Ident) -> Option<&'c crate::plan::Table> {
    let mut bindings: Vec<(String, String)> = Vec::new();
    let mut copy = q.clone();
    let ctes = cte_names(q);
    factors_mut(&mut copy, &mut |t| {
        if let TableFactor::Table { name, alias } = t {
            if !ctes.contains(name.as_str()) {
                bindings.push((alias.as_ref().unwrap_or(name).0.clone(), name.0.clone()));
            }
        }
    });
    let found = match table {
        Some(q) => bindings.iter().find(|(b, _)| b == q.as_str()).map(|(_, t)| t.clone()),
        None => bindings
            .iter()
            .find(|(_, t)| catalog.table(t).and_then(|t| t.column(name.as_str())).is_some())
            .map(|(_, t)| t.clone()),
    }?;
    catalog.table(&found).filter(|t| t.column(name.as_str()).is_some())
}

fn column_replacement(q: &mut Query, catalog: &Catalog, rng: &mut ChaCha8Rng) -> bool {
    let mut sites: Vec<(Option<Ident>, Ident, Vec<String>)> = Vec::new();
    let snapshot = q.clone();
    let mut seen = BTreeSet::new();
    exprs_mut(&mut q.clone(), &mut |e| {
        if let Expr::Column { table, name, .. } = e {
            if !seen.insert((table.clone(), name.clone())) {
                return;
            }
            if let Some(t) = column_table(&snapshot, catalog, table.as_ref(), name) {
                let ty = t.column(name.as_str()).expect("resolved").ty;
                let mut others: Vec<String> =
                    t.columns.iter().filter(|c| c.name != name.as_str() && c.ty == ty).map(|c| c.name.clone()).collect();
                if others.is_empty() {
                    others = t.columns.iter().filter(|c| c.name != name.as_str()).map(|c| c.name.clone()).collect();
                }
                if !others.is_empty() {
                    sites.push((table.clone(), name.clone(), others));
                }
            }
        }
    });
    let Some((table, name, others)) = sites.choose(rng) else { return false };
    let new = Ident::new(others.choose(rng).expect("non-empty"));
    exprs_mut(q, &mut |e| {
        if let Expr::Column { table: t, name: n, .. } = e {
            if t == table && n == name {
                *n = new.clone();
            }
        }
    });
    true
}

fn column_removal(q: &mut Query, rng: &mut ChaCha8Rng) -> bool {
    let SetExpr::Select(s) = &mut q.body else { return false };
    let removable: Vec<usize> =
        s.projection.iter().enumerate().filter(|(_, i)| matches!(i, SelectItem::Expr { .. })).map(|(i, _)| i).collect();
    if s.projection.len() < 2 || removable.is_empty() {
        return false;
    }
    s.projection.remove(*removable.choose(rng).expect("non-empty"));
    true
}

fn top_conjuncts(e: Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Binary { op: BinaryOp::And, left, right } => {
            top_conjuncts(*left, out);
            top_conjuncts(*right, out);
        }
        e => out.push(e),
    }
}

fn conjoin(v: Vec<Expr>) -> Option<Expr> {
    v.into_iter().reduce(|a, b| Expr::binary(BinaryOp::And, a, b))
}

/// Whether every column in `e` belongs to the base binding and `e` holds
/// no subquery.
fn local_to(e: &Expr, binding: &str, base: &crate::plan::Table, single: bool) -> bool {
    let mut ok = true;
    crate::sql::ast::walk_expr(e, &mut |x| match x {
        Expr::Subquery(_) | Expr::InSubquery { .. } | Expr::Exists { .. } | Expr::Function { .. } => ok = false,
        Expr::Column { table: Some(t), name, .. } => ok &= t.as_str() == binding && base.column(name.as_str()).is_some(),
        Expr::Column { table: None, name, .. } => ok &= single && base.column(name.as_str()).is_some(),
        Expr::Unary { op: UnaryOp::Not, .. } => {}
        _ => {}
    });
    ok
}

/// Moves filters on the first table into one or two CTE steps and reads
/// the last step under the table's binding name. Meaning is preserved.
pub fn cte_rewrite(q: &Query, catalog: &Catalog, rng: &mut ChaCha8Rng) -> Option<Query> {
    if !q.with.is_empty() {
        return None;
    }
    let SetExpr::Select(sel) = &q.body else { return None };
    let from = sel.from.as_ref()?;
    let TableFactor::Table { name, alias } = &from.base else { return None };
    let base = catalog.table(name.as_str())?;
    let binding = alias.as_ref().unwrap_or(name).clone();
    let single = from.joins.is_empty();
    let mut conjuncts = Vec::new();
    if let Some(w) = sel.selection.clone() {
        top_conjuncts(w, &mut conjuncts);
    }
    let (pushable, rest): (Vec<Expr>, Vec<Expr>) =
        conjuncts.into_iter().partition(|c| local_to(c, binding.as_str(), base, single));
    if pushable.is_empty() {
        return None;
    }
    let step_name = |i: usize| {
        let mut k = i;
        loop {
            let n = format!("step{k}");
            if catalog.table(&n).is_none() {
                return Ident::new(n);
            }
            k += 10;
        }
    };
    let star = |from: TableFactor, where_: Option<Expr>| {
        Query::simple(Select {
            projection: vec![SelectItem::Wildcard],
            from: Some(FromClause { base: from, joins: vec![] }),
            selection: where_,
            ..Select::default()
        })
    };
    let source = TableFactor::Table { name: name.clone(), alias: alias.clone() };
    let split = pushable.len() >= 2 && rng.gen_bool(0.5);
    let mut with = Vec::new();
    if split {
        let cut = rng.gen_range(1..pushable.len());
        let (a, b) = pushable.split_at(cut);
        with.push(Cte { name: step_name(1), query: star(source, conjoin(a.to_vec())) });
        let over = TableFactor::Table { name: step_name(1), alias: Some(binding.clone()) };
        with.push(Cte { name: step_name(2), query: star(over, conjoin(b.to_vec())) });
    } else {
        with.push(Cte { name: step_name(1), query: star(source, conjoin(pushable)) });
    }
    let last = with.last().expect("one step").name.clone();
    let mut outer = (**sel).clone();
    outer.selection = conjoin(rest);
    outer.from.as_mut().expect("from").base = TableFactor::Table { name: last, alias: Some(binding) };
    Some(Query { with, body: SetExpr::Select(Box::new(outer)), order_by: q.order_by.clone(), limit: q.limit.clone() })
}

/// What produced a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    Augment(StrategySpec),
    CteRewrite,
}

impl Generator {
    pub fn tag(&self) -> &'static str {
        match self {
            Generator::Augment(s) => s.strategy.tag(),
            Generator::CteRewrite => "cte-rewrite",
        }
    }

    pub fn label(&self) -> u8 {
        match self {
            Generator::Augment(s) => s.strategy.label(),
            Generator::CteRewrite => 1,
        }
    }
}

impl From<Strategy> for Generator {
    fn from(s: Strategy) -> Self {
        Generator::Augment(StrategySpec::new(s))
    }
}

/// Applies one generator to a seed. With a database the label is checked by
/// execution: equivalent rewrites must agree, others must disagree or fail.
pub fn generate(
    seed_sql: &str,
    catalog: &Catalog,
    db: Option<&Database>,
    generator: &Generator,
    rng_seed: u64,
) -> Result<SqlPair, AugmentError> {
    let seed = parse(seed_sql).map_err(|e| AugmentError::InvalidSeed(e.to_string()))?;
    lower(&seed, catalog).map_err(|e| AugmentError::InvalidSeed(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let candidate = match generator {
        Generator::CteRewrite => cte_rewrite(&seed, catalog, &mut rng).ok_or(AugmentError::NotApplicable("cte-rewrite".into()))?,
        Generator::Augment(spec) => {
            let mut q = seed.clone();
            let applied = match spec.strategy {
                Strategy::InClauseReplacement => in_clause(&mut q, &mut rng),
                Strategy::ColumnNamePerturbation => perturb_column(&mut q, catalog, spec.edits, &mut rng),
                Strategy::AndOrSwap => and_or_swap(&mut q, &mut rng),
                Strategy::ComparisonOperatorSwap => comparison_swap(&mut q, &spec.operator_pool, &mut rng),
                Strategy::TableSourceReplacement => table_source(&mut q, catalog, &mut rng),
                Strategy::ColumnNameReplacement => column_replacement(&mut q, catalog, &mut rng),
                Strategy::ColumnRemoval => column_removal(&mut q, &mut rng),
            };
            if !applied {
                return Err(not_applicable(spec));
            }
            q
        }
    };
    let reference_sql = print_canonical(&seed);
    let candidate_sql = print_canonical(&candidate);
    if candidate_sql == reference_sql {
        return Err(AugmentError::Unchanged);
    }
    if parse(&candidate_sql).is_err() {
        return Err(AugmentError::Unverified("candidate does not parse".into()));
    }
    let label = generator.label();
    if let Some(db) = db {
        let r = execute(&reference_sql, db, catalog).map_err(|e| AugmentError::InvalidSeed(e.message))?;
        let c = execute(&candidate_sql, db, catalog);
        let same = c.as_ref().is_ok_and(|c| results_equal(&r, c));
        if same != (label == 1) {
            return Err(AugmentError::Unverified(format!("{} pair disagrees with execution", generator.tag())));
        }
    }
    Ok(SqlPair {
        id: format!("{}-{rng_seed}", generator.tag()),
        schema_id: String::new(),
        reference_sql,
        candidate_sql,
        label,
        provenance: generator.tag().to_string(),
    })
}

/// The seven-strategy entry point.
pub fn augment(
    seed_sql: &str,
    catalog: &Catalog,
    db: Option<&Database>,
    spec: &StrategySpec,
    rng_seed: u64,
) -> Result<SqlPair, AugmentError> {
    generate(seed_sql, catalog, db, &Generator::Augment(spec.clone()), rng_seed)
}
