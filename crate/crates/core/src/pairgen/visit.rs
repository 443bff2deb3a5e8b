//! Mutable traversal of every expression and table factor in a query,
//! including subqueries, CTE bodies and derived tables.

use crate::sql::ast::{Expr, Query, SelectItem, SetExpr, TableFactor};

pub trait VisitMut {
    fn expr(&mut self, _e: &mut Expr) {}
    fn factor(&mut self, _t: &mut TableFactor) {}
}

pub fn query_mut(q: &mut Query, v: &mut dyn VisitMut) {
    for cte in &mut q.with {
        query_mut(&mut cte.query, v);
    }
    set_mut(&mut q.body, v);
    for o in &mut q.order_by {
        expr_mut(&mut o.expr, v);
    }
}

fn set_mut(s: &mut SetExpr, v: &mut dyn VisitMut) {
    match s {
        SetExpr::Select(sel) => {
            for item in &mut sel.projection {
                if let SelectItem::Expr { expr, .. } = item {
                    expr_mut(expr, v);
                }
            }
            if let Some(from) = &mut sel.from {
                factor_mut(&mut from.base, v);
                for j in &mut from.joins {
                    factor_mut(&mut j.factor, v);
                    if let Some(on) = &mut j.on {
                        expr_mut(on, v);
                    }
                }
            }
            if let Some(w) = &mut sel.selection {
                expr_mut(w, v);
            }
            for g in &mut sel.group_by {
                expr_mut(g, v);
            }
            if let Some(h) = &mut sel.having {
                expr_mut(h, v);
            }
        }
        SetExpr::SetOp { left, right, .. } => {
            set_mut(left, v);
            set_mut(right, v);
        }
    }
}

fn factor_mut(t: &mut TableFactor, v: &mut dyn VisitMut) {
    v.factor(t);
    if let TableFactor::Derived { query, .. } = t {
        query_mut(query, v);
    }
}

pub fn expr_mut(e: &mut Expr, v: &mut dyn VisitMut) {
    v.expr(e);
    match e {
        Expr::Column { .. } | Expr::Literal(_) => {}
        Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } => expr_mut(expr, v),
        Expr::Binary { left, right, .. } => {
            expr_mut(left, v);
            expr_mut(right, v);
        }
        Expr::Function { args, .. } => args.iter_mut().for_each(|a| expr_mut(a, v)),
        Expr::Case { operand, branches, else_result } => {
            if let Some(o) = operand {
                expr_mut(o, v);
            }
            for (w, t) in branches {
                expr_mut(w, v);
                expr_mut(t, v);
            }
            if let Some(e) = else_result {
                expr_mut(e, v);
            }
        }
        Expr::Subquery(q) | Expr::Exists { query: q, .. } => query_mut(q, v),
        Expr::InList { expr, list, .. } => {
            expr_mut(expr, v);
            list.iter_mut().for_each(|a| expr_mut(a, v));
        }
        Expr::InSubquery { expr, query, .. } => {
            expr_mut(expr, v);
            query_mut(query, v);
        }
        Expr::Between { expr, low, high, .. } => {
            expr_mut(expr, v);
            expr_mut(low, v);
            expr_mut(high, v);
        }
        Expr::Like { expr, pattern, .. } => {
            expr_mut(expr, v);
            expr_mut(pattern, v);
        }
    }
}

/// Calls `f` on the `k`-th expression accepted by `matches`, counting in
/// traversal order. Returns the number of accepted expressions.
pub struct NthExpr<'a> {
    pub matches: &'a dyn Fn(&Expr) -> bool,
    pub target: Option<usize>,
    pub apply: &'a mut dyn FnMut(&mut Expr),
    pub seen: usize,
}

impl VisitMut for NthExpr<'_> {
    fn expr(&mut self, e: &mut Expr) {
        if (self.matches)(e) {
            if self.target == Some(self.seen) {
                (self.apply)(e);
            }
            self.seen += 1;
        }
    }
}

pub fn count_exprs(q: &Query, matches: &dyn Fn(&Expr) -> bool) -> usize {
    let mut copy = q.clone();
    let mut v = NthExpr { matches, target: None, apply: &mut |_| {}, seen: 0 };
    query_mut(&mut copy, &mut v);
    v.seen
}

pub fn apply_nth_expr(q: &mut Query, matches: &dyn Fn(&Expr) -> bool, k: usize, apply: &mut dyn FnMut(&mut Expr)) {
    let mut v = NthExpr { matches, target: Some(k), apply, seen: 0 };
    query_mut(q, &mut v);
}

struct Factors<'a>(&'a mut dyn FnMut(&mut TableFactor));

impl VisitMut for Factors<'_> {
    fn factor(&mut self, t: &mut TableFactor) {
        (self.0)(t)
    }
}

pub fn factors_mut(q: &mut Query, f: &mut dyn FnMut(&mut TableFactor)) {
    query_mut(q, &mut Factors(f));
}

struct Exprs<'a>(&'a mut dyn FnMut(&mut Expr));

impl VisitMut for Exprs<'_> {
    fn expr(&mut self, e: &mut Expr) {
        (self.0)(e)
    }
}

pub fn exprs_mut(q: &mut Query, f: &mut dyn FnMut(&mut Expr)) {
    query_mut(q, &mut Exprs(f));
}
