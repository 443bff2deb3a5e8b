//! AST → operator tree, resolving names against the catalog.

use std::collections::BTreeSet;

use super::catalog::Catalog;
use super::rel::*;
use crate::sql::ast::{self, BinaryOp, Expr, Ident, Literal, Query, Select, SelectItem, SetExpr, TableFactor, UnaryOp};

/// Lowers a parsed query. The result is not normalized.
pub fn lower(q: &Query, catalog: &Catalog) -> Result<Rel, RotError> {
    let mut l = Lowerer { catalog, next_id: 0, aggs: Vec::new() };
    l.query(q, &[], &Vec::new())
}

#[derive(Clone)]
struct CteDef<'q> {
    name: Ident,
    query: &'q Query,
    /// Number of environment entries visible to the body.
    visible: usize,
}

type Env<'q> = Vec<CteDef<'q>>;

struct Binding {
    name: String,
    columns: Vec<Field>,
}

#[derive(Default)]
struct Scope {
    bindings: Vec<Binding>,
}

impl Scope {
    fn field_ids(&self) -> BTreeSet<FieldId> {
        self.bindings.iter().flat_map(|b| b.columns.iter().map(|f| f.id)).collect()
    }
}

#[derive(Clone)]
struct Cx<'a, 'q> {
    /// Enclosing scopes, nearest last.
    scopes: Vec<&'a Scope>,
    env: &'a Env<'q>,
    aliases: &'a [(Ident, &'q Expr)],
    alias_first: bool,
    allow_agg: bool,
}

impl<'a, 'q> Cx<'a, 'q> {
    fn plain(&self) -> Cx<'a, 'q> {
        Cx { aliases: &[], alias_first: false, allow_agg: false, ..self.clone() }
    }
}

struct Lowerer<'c> {
    catalog: &'c Catalog,
    next_id: u32,
    /// Aggregate calls collected for each SELECT being lowered.
    aggs: Vec<Vec<(AggCall, Field)>>,
}

fn is_aggregate_call(name: &str, star: bool, nargs: usize) -> bool {
    match name {
        "count" | "sum" | "avg" => true,
        "min" | "max" => nargs == 1 && !star,
        _ => false,
    }
}

fn contains_aggregate(e: &Expr) -> bool {
    let mut found = false;
    ast::walk_expr_local(e, &mut |x| {
        if let Expr::Function { name, star, args, .. } = x {
            if is_aggregate_call(name.as_str(), *star, args.len()) {
                found = true;
            }
        }
    });
    found
}

fn literal_count(e: &Expr) -> Option<i64> {
    match e {
        Expr::Literal(Literal::Integer(v)) => Some(*v),
        _ => None,
    }
}

impl<'c> Lowerer<'c> {
    fn fresh(&mut self, label: String, name: String) -> Field {
        let id = FieldId(self.next_id);
        self.next_id += 1;
        Field { id, label, name }
    }

    fn query<'q>(&mut self, q: &'q Query, outer: &[&Scope], env: &Env<'q>) -> Result<Rel, RotError> {
        let mut env = env.clone();
        let mut names = BTreeSet::new();
        for cte in &q.with {
            if !names.insert(&cte.name) {
                return Err(RotError::unsupported(format!("duplicate WITH table name: {}", cte.name.as_str())));
            }
            // validated once here; each reference re-lowers with fresh ids
            self.query(&cte.query, &[], &env)?;
            let visible = env.len();
            env.push(CteDef { name: cte.name.clone(), query: &cte.query, visible });
        }
        let mut rel = match &q.body {
            SetExpr::Select(s) => self.select(s, &q.order_by, outer, &env)?,
            SetExpr::SetOp { .. } => {
                let rel = self.set_expr(&q.body, outer, &env)?;
                self.set_order(rel, &q.order_by)?
            }
        };
        if let Some(limit) = &q.limit {
            let count = literal_count(&limit.count).ok_or_else(|| RotError::unsupported("LIMIT requires an integer literal"))?;
            let offset = match &limit.offset {
                Some(o) => literal_count(o).ok_or_else(|| RotError::unsupported("OFFSET requires an integer literal"))?,
                None => 0,
            };
            rel = Rel::Limit { input: Box::new(rel), count: if count < 0 { u64::MAX } else { count as u64 }, offset: offset.max(0) as u64 };
        }
        Ok(rel)
    }

    fn set_expr<'q>(&mut self, s: &'q SetExpr, outer: &[&Scope], env: &Env<'q>) -> Result<Rel, RotError> {
        match s {
            SetExpr::Select(sel) => self.select(sel, &[], outer, env),
            SetExpr::SetOp { op, left, right } => {
                let l = self.set_expr(left, outer, env)?;
                let r = self.set_expr(right, outer, env)?;
                if l.arity() != r.arity() {
                    return Err(RotError::unsupported(format!(
                        "SELECTs to the left and right of {} do not have the same number of result columns",
                        op.keyword()
                    )));
                }
                let fields = l.fields().into_iter().map(|f| self.fresh(f.label, f.name)).collect();
                Ok(Rel::SetOp { op: *op, left: Box::new(l), right: Box::new(r), fields })
            }
        }
    }

    /// ORDER BY over a compound select: keys must name output columns.
    fn set_order(&mut self, rel: Rel, order_by: &[ast::OrderItem]) -> Result<Rel, RotError> {
        if order_by.is_empty() {
            return Ok(rel);
        }
        let fields = rel.fields();
        let mut keys = Vec::new();
        for item in order_by {
            let field = match &item.expr {
                Expr::Literal(Literal::Integer(n)) if *n >= 1 && (*n as usize) <= fields.len() => &fields[*n as usize - 1],
                Expr::Column { name, .. } => fields
                    .iter()
                    .find(|f| f.name == name.as_str())
                    .ok_or_else(|| RotError::unsupported(format!("ORDER BY term {} does not match any result column", name.as_str())))?,
                other => return Err(RotError::unsupported(format!("ORDER BY term {other} does not match any result column"))),
            };
            keys.push(SortKey { expr: Scalar::column(field), desc: item.desc });
        }
        Ok(Rel::Sort { input: Box::new(rel), keys })
    }

    fn table_factor<'q>(&mut self, t: &'q TableFactor, env: &Env<'q>) -> Result<(Rel, Binding), RotError> {
        match t {
            TableFactor::Table { name, alias } => {
                let bname = alias.as_ref().unwrap_or(name).as_str().to_string();
                if let Some(def) = env.iter().rev().find(|d| &d.name == name) {
                    let sub_env: Env<'q> = env[..def.visible].to_vec();
                    let rel = self.query(def.query, &[], &sub_env)?;
                    let columns = rel.fields();
                    return Ok((rel, Binding { name: bname, columns }));
                }
                let table = self
                    .catalog
                    .table(name.as_str())
                    .ok_or_else(|| RotError::new(RotErrorClass::UnresolvedTable, format!("no such table: {}", name.as_str())))?;
                let fields: Vec<Field> =
                    table.columns.iter().map(|c| self.fresh(format!("{}.{}", table.name, c.name), c.name.clone())).collect();
                Ok((Rel::Scan { table: table.name.clone(), fields: fields.clone() }, Binding { name: bname, columns: fields }))
            }
            TableFactor::Derived { query, alias } => {
                let rel = self.query(query, &[], env)?;
                let columns = rel.fields();
                let name = alias.as_ref().map(|a| a.as_str().to_string()).unwrap_or_default();
                Ok((rel, Binding { name, columns }))
            }
        }
    }

    fn from<'q>(&mut self, s: &'q Select, outer: &[&Scope], env: &Env<'q>) -> Result<(Rel, Scope), RotError> {
        let Some(from) = &s.from else {
            return Ok((Rel::Values { rows: vec![vec![]], fields: vec![] }, Scope::default()));
        };
        let (mut rel, b) = self.table_factor(&from.base, env)?;
        let mut scope = Scope { bindings: vec![b] };
        for j in &from.joins {
            let (right, b) = self.table_factor(&j.factor, env)?;
            scope.bindings.push(b);
            let on = match &j.on {
                Some(e) => {
                    let mut scopes: Vec<&Scope> = outer.to_vec();
                    scopes.push(&scope);
                    let cx = Cx { scopes, env, aliases: &[], alias_first: false, allow_agg: false };
                    Some(self.expr(e, &cx)?)
                }
                None => None,
            };
            let kind = match (j.kind, &on) {
                (ast::JoinKind::Left, _) => JoinType::Left,
                (ast::JoinKind::Inner, Some(_)) => JoinType::Inner,
                _ => JoinType::Cross,
            };
            rel = Rel::Join { kind, left: Box::new(rel), right: Box::new(right), on };
        }
        Ok((rel, scope))
    }

    fn select<'q>(
        &mut self,
        s: &'q Select,
        order_by: &'q [ast::OrderItem],
        outer: &[&Scope],
        env: &Env<'q>,
    ) -> Result<Rel, RotError> {
        let (mut rel, scope) = self.from(s, outer, env)?;
        let aliases: Vec<(Ident, &'q Expr)> = s
            .projection
            .iter()
            .filter_map(|item| match item {
                SelectItem::Expr { expr, alias: Some(a) } => Some((a.clone(), expr)),
                _ => None,
            })
            .collect();
        let mut scopes: Vec<&Scope> = outer.to_vec();
        scopes.push(&scope);
        let cx = Cx { scopes, env, aliases: &aliases, alias_first: false, allow_agg: false };

        if let Some(w) = &s.selection {
            let predicate = self.expr(w, &cx)?;
            rel = Rel::Filter { input: Box::new(rel), predicate };
        }

        let aggregated = !s.group_by.is_empty()
            || s.projection.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if contains_aggregate(expr)))
            || s.having.as_ref().is_some_and(contains_aggregate)
            || (!s.distinct && order_by.iter().any(|o| contains_aggregate(&o.expr)));
        if s.having.is_some() && !aggregated {
            return Err(RotError::unsupported("a GROUP BY clause is required before HAVING"));
        }

        let agg_cx = Cx { allow_agg: aggregated, ..cx.clone() };
        let local = scope.field_ids();

        let mut group: Vec<(Scalar, Field)> = Vec::new();
        if aggregated {
            self.aggs.push(Vec::new());
            for g in &s.group_by {
                let e = match literal_count(g) {
                    Some(n) => match s.projection.get((n - 1).max(0) as usize) {
                        Some(SelectItem::Expr { expr, .. }) if n >= 1 => self.expr(expr, &cx)?,
                        _ => return Err(RotError::unsupported(format!("GROUP BY term out of range: {n}"))),
                    },
                    None => self.expr(g, &cx)?,
                };
                let field = match &e {
                    Scalar::Column { id, label } => Field { id: *id, label: label.clone(), name: String::new() },
                    other => self.fresh(other.render(), String::new()),
                };
                group.push((e, field));
            }
        }

        // projection expressions, in the post-aggregate context when grouping
        let mut proj: Vec<(Scalar, String)> = Vec::new();
        for item in &s.projection {
            match item {
                SelectItem::Wildcard => {
                    for b in &scope.bindings {
                        for f in &b.columns {
                            proj.push((Scalar::column(f), f.name.clone()));
                        }
                    }
                    if scope.bindings.is_empty() {
                        return Err(RotError::unsupported("no tables specified"));
                    }
                }
                SelectItem::QualifiedWildcard(t) => {
                    let b = scope
                        .bindings
                        .iter()
                        .find(|b| b.name == t.as_str())
                        .ok_or_else(|| RotError::new(RotErrorClass::UnresolvedTable, format!("no such table: {}", t.as_str())))?;
                    for f in &b.columns {
                        proj.push((Scalar::column(f), f.name.clone()));
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    let e = self.expr(expr, &Cx { aliases: &[], ..agg_cx.clone() })?;
                    let name = match (alias, expr) {
                        (Some(a), _) => a.as_str().to_string(),
                        (None, Expr::Column { name, .. }) => name.as_str().to_string(),
                        (None, other) => other.to_string().to_lowercase(),
                    };
                    proj.push((e, name));
                }
            }
        }
        if aggregated {
            for (e, _) in &mut proj {
                self.post_aggregate(e, &group, &local);
            }
        }

        let having = match &s.having {
            Some(h) => {
                let mut e = self.expr(h, &agg_cx)?;
                self.post_aggregate(&mut e, &group, &local);
                Some(e)
            }
            None => None,
        };

        // sort keys, resolved before projection (aliases take priority)
        let mut keys = Vec::new();
        for item in order_by {
            let mut e = match literal_count(&item.expr) {
                Some(n) if n >= 1 && (n as usize) <= proj.len() => proj[n as usize - 1].0.clone(),
                Some(n) => return Err(RotError::unsupported(format!("ORDER BY term out of range: {n}"))),
                None => {
                    let ocx = Cx { alias_first: true, allow_agg: aggregated, ..cx.clone() };
                    self.expr(&item.expr, &ocx)?
                }
            };
            if aggregated {
                self.post_aggregate(&mut e, &group, &local);
            }
            keys.push(SortKey { expr: e, desc: item.desc });
        }

        if aggregated {
            let aggs = self.aggs.pop().expect("aggregate frame");
            rel = Rel::Aggregate { input: Box::new(rel), group, aggs };
            if let Some(h) = having {
                rel = Rel::Filter { input: Box::new(rel), predicate: h };
            }
        }

        let exprs: Vec<(Scalar, Field)> = proj
            .into_iter()
            .map(|(e, name)| {
                let field = match &e {
                    Scalar::Column { id, label } => Field { id: *id, label: label.clone(), name },
                    other => self.fresh(other.render(), name),
                };
                (e, field)
            })
            .collect();

        if s.distinct {
            let mut sort_keys = Vec::new();
            for k in keys {
                let (_, f) = exprs
                    .iter()
                    .find(|(e, _)| *e == k.expr)
                    .ok_or_else(|| RotError::unsupported("ORDER BY term of a DISTINCT select must appear in the result"))?;
                sort_keys.push(SortKey { expr: Scalar::column(f), desc: k.desc });
            }
            let group = exprs.iter().map(|(_, f)| (Scalar::column(f), f.clone())).collect();
            rel = Rel::Project { input: Box::new(rel), exprs };
            rel = Rel::Aggregate { input: Box::new(rel), group, aggs: vec![] };
            if !sort_keys.is_empty() {
                rel = Rel::Sort { input: Box::new(rel), keys: sort_keys };
            }
        } else {
            if !keys.is_empty() {
                rel = Rel::Sort { input: Box::new(rel), keys };
            }
            rel = Rel::Project { input: Box::new(rel), exprs };
        }
        Ok(rel)
    }

    /// Maps an expression lowered over the aggregate input onto the
    /// aggregate output: group-key matches become key references, and any
    /// remaining input column becomes a bare-column aggregate.
    fn post_aggregate(&mut self, e: &mut Scalar, group: &[(Scalar, Field)], local: &BTreeSet<FieldId>) {
        if let Some((_, f)) = group.iter().find(|(g, _)| g == e) {
            *e = Scalar::column(f);
            return;
        }
        if let Scalar::Column { id, .. } = e {
            if local.contains(id) {
                let call = AggCall { func: AggFunc::Bare, distinct: false, arg: Some(e.clone()) };
                *e = self.agg_ref(call);
            }
            return;
        }
        for c in e.children_mut() {
            self.post_aggregate(c, group, local);
        }
    }

    fn agg_ref(&mut self, call: AggCall) -> Scalar {
        let frame = self.aggs.last().expect("aggregate frame");
        if let Some((_, f)) = frame.iter().find(|(a, _)| *a == call) {
            return Scalar::column(f);
        }
        let mut label = String::new();
        render_agg(&call, &mut label);
        let field = self.fresh(label, String::new());
        let col = Scalar::column(&field);
        self.aggs.last_mut().expect("aggregate frame").push((call, field));
        col
    }

    fn resolve_in(&self, scope: &Scope, table: Option<&Ident>, name: &Ident) -> Result<Option<Field>, RotError> {
        let mut hits: Vec<&Field> = Vec::new();
        match table {
            Some(t) => {
                let bs: Vec<&Binding> = scope.bindings.iter().filter(|b| b.name == t.as_str()).collect();
                if bs.len() > 1 {
                    return Err(RotError::new(RotErrorClass::AmbiguousName, format!("ambiguous table name: {}", t.as_str())));
                }
                if let Some(b) = bs.first() {
                    hits.extend(b.columns.iter().filter(|f| f.name == name.as_str()));
                    if hits.is_empty() {
                        return Err(RotError::new(
                            RotErrorClass::UnresolvedColumn,
                            format!("no such column: {}.{}", t.as_str(), name.as_str()),
                        ));
                    }
                }
            }
            None => {
                for b in &scope.bindings {
                    if let Some(f) = b.columns.iter().find(|f| f.name == name.as_str()) {
                        hits.push(f);
                    }
                }
            }
        }
        match hits.len() {
            0 => Ok(None),
            1 => Ok(Some(hits[0].clone())),
            _ if hits.iter().all(|f| f.id == hits[0].id) => Ok(Some(hits[0].clone())),
            _ => {
                let shown = match table {
                    Some(t) => format!("{}.{}", t.as_str(), name.as_str()),
                    None => name.as_str().to_string(),
                };
                Err(RotError::new(RotErrorClass::AmbiguousName, format!("ambiguous column name: {shown}")))
            }
        }
    }

    fn column<'q>(&mut self, table: Option<&Ident>, name: &Ident, quoted: bool, cx: &Cx<'_, 'q>) -> Result<Scalar, RotError> {
        let alias = || {
            if table.is_some() {
                None
            } else {
                cx.aliases.iter().find(|(a, _)| a == name).map(|(_, e)| *e)
            }
        };
        if cx.alias_first {
            if let Some(e) = alias() {
                return self.expr(e, &Cx { aliases: &[], alias_first: false, ..cx.clone() });
            }
        }
        let mut scopes = cx.scopes.iter().rev();
        if let Some(local) = scopes.next() {
            if let Some(f) = self.resolve_in(local, table, name)? {
                return Ok(Scalar::column(&f));
            }
        }
        if !cx.alias_first {
            if let Some(e) = alias() {
                return self.expr(e, &Cx { aliases: &[], ..cx.clone() });
            }
        }
        for s in scopes {
            if let Some(f) = self.resolve_in(s, table, name)? {
                return Ok(Scalar::column(&f));
            }
        }
        if quoted && table.is_none() {
            return Ok(Scalar::Literal(Literal::Text(name.as_str().to_string())));
        }
        let shown = match table {
            Some(t) => format!("{}.{}", t.as_str(), name.as_str()),
            None => name.as_str().to_string(),
        };
        Err(RotError::new(RotErrorClass::UnresolvedColumn, format!("no such column: {shown}")))
    }

    fn subquery<'q>(&mut self, q: &'q Query, cx: &Cx<'_, 'q>, single: bool) -> Result<Rel, RotError> {
        let rel = self.query(q, &cx.scopes, cx.env)?;
        if single && rel.arity() != 1 {
            return Err(RotError::unsupported(format!("sub-select returns {} columns - expected 1", rel.arity())));
        }
        Ok(rel)
    }

    fn boxed<'q>(&mut self, e: &'q Expr, cx: &Cx<'_, 'q>) -> Result<Box<Scalar>, RotError> {
        Ok(Box::new(self.expr(e, cx)?))
    }

    fn expr<'q>(&mut self, e: &'q Expr, cx: &Cx<'_, 'q>) -> Result<Scalar, RotError> {
        Ok(match e {
            Expr::Column { table, name, quoted } => self.column(table.as_ref(), name, *quoted, cx)?,
            Expr::Literal(l) => Scalar::Literal(l.clone()),
            Expr::Unary { op: UnaryOp::Plus, expr } => self.expr(expr, cx)?,
            Expr::Unary { op: UnaryOp::Neg, expr } => Scalar::Unary { op: UnaryFn::Neg, arg: self.boxed(expr, cx)? },
            Expr::Unary { op: UnaryOp::Not, expr } => Scalar::Unary { op: UnaryFn::Not, arg: self.boxed(expr, cx)? },
            Expr::Binary { op: BinaryOp::And, left, right } => Scalar::And(vec![self.expr(left, cx)?, self.expr(right, cx)?]),
            Expr::Binary { op: BinaryOp::Or, left, right } => Scalar::Or(vec![self.expr(left, cx)?, self.expr(right, cx)?]),
            Expr::Binary { op, left, right } => Scalar::binary(*op, self.expr(left, cx)?, self.expr(right, cx)?),
            Expr::Function { name, distinct, star, args } => {
                let fname = name.as_str();
                if is_aggregate_call(fname, *star, args.len()) {
                    if !cx.allow_agg {
                        return Err(RotError::unsupported(format!("misuse of aggregate function {fname}()")));
                    }
                    let func = match (fname, *star) {
                        ("count", true) => AggFunc::CountStar,
                        ("count", false) => AggFunc::Count,
                        ("sum", _) => AggFunc::Sum,
                        ("avg", _) => AggFunc::Avg,
                        ("min", _) => AggFunc::Min,
                        _ => AggFunc::Max,
                    };
                    let arg = match (func, args.as_slice()) {
                        (AggFunc::CountStar, []) => None,
                        (AggFunc::CountStar, _) | (_, []) => {
                            return Err(RotError::unsupported(format!("wrong number of arguments to function {fname}()")))
                        }
                        (_, [a]) => Some(self.expr(a, &cx.plain())?),
                        _ => return Err(RotError::unsupported(format!("wrong number of arguments to function {fname}()"))),
                    };
                    return Ok(self.agg_ref(AggCall { func, distinct: *distinct, arg }));
                }
                let func = ScalarFunc::lookup(fname)
                    .ok_or_else(|| RotError::unsupported(format!("no such function: {fname}")))?;
                let (lo, hi) = func.arity();
                if *star || *distinct || args.len() < lo || args.len() > hi {
                    return Err(RotError::unsupported(format!("wrong number of arguments to function {fname}()")));
                }
                let args = args.iter().map(|a| self.expr(a, cx)).collect::<Result<_, _>>()?;
                Scalar::Func { func, args }
            }
            Expr::Case { operand, branches, else_result } => Scalar::Case {
                operand: match operand {
                    Some(o) => Some(self.boxed(o, cx)?),
                    None => None,
                },
                branches: branches
                    .iter()
                    .map(|(w, t)| Ok((self.expr(w, cx)?, self.expr(t, cx)?)))
                    .collect::<Result<_, RotError>>()?,
                else_result: match else_result {
                    Some(x) => Some(self.boxed(x, cx)?),
                    None => None,
                },
            },
            Expr::Subquery(q) => Scalar::Subquery(Box::new(self.subquery(q, cx, true)?)),
            Expr::InList { expr, list, negated } => Scalar::InList {
                expr: self.boxed(expr, cx)?,
                list: list.iter().map(|x| self.expr(x, cx)).collect::<Result<_, _>>()?,
                negated: *negated,
            },
            Expr::InSubquery { expr, query, negated } => {
                let expr = self.boxed(expr, cx)?;
                Scalar::InSubquery { expr, rel: Box::new(self.subquery(query, cx, true)?), negated: *negated }
            }
            Expr::Exists { query, negated } => Scalar::Exists { rel: Box::new(self.subquery(query, cx, false)?), negated: *negated },
            Expr::Between { expr, low, high, negated } => Scalar::Between {
                expr: self.boxed(expr, cx)?,
                low: self.boxed(low, cx)?,
                high: self.boxed(high, cx)?,
                negated: *negated,
            },
            Expr::Like { expr, pattern, negated } => {
                Scalar::Like { expr: self.boxed(expr, cx)?, pattern: self.boxed(pattern, cx)?, negated: *negated }
            }
            Expr::IsNull { expr, negated } => Scalar::IsNull { expr: self.boxed(expr, cx)?, negated: *negated },
        })
    }
}
