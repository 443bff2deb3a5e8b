//! Deterministic rewrite passes producing a canonical plan.
//!
//! Pass order: IN-list expansion, BETWEEN expansion, predicate flattening
//! and canonical operand ordering, NOT pushdown, identity projection
//! removal, constant filter removal, inner-join input ordering. The list is
//! repeated until nothing changes, then field ids are renumbered in
//! traversal order so equal plans compare equal.

use std::collections::HashMap;

use super::rel::*;
use crate::exec::Value;
use crate::sql::ast::{BinaryOp, Literal};

const MAX_ROUNDS: usize = 16;

pub fn normalize(rel: &Rel) -> Rel {
    let mut cur = rel.clone();
    for _ in 0..MAX_ROUNDS {
        let before = cur.clone();
        walk_scalars(&mut cur, &mut expand_in_list);
        walk_scalars(&mut cur, &mut expand_between);
        walk_rels(&mut cur, &mut merge_filters);
        walk_scalars(&mut cur, &mut canonical_operands);
        walk_scalars(&mut cur, &mut push_not);
        walk_rels(&mut cur, &mut remove_identity_project);
        walk_scalars(&mut cur, &mut fold_constants);
        walk_rels(&mut cur, &mut remove_true_filter);
        walk_rels(&mut cur, &mut order_join_inputs);
        if cur == before {
            break;
        }
    }
    renumber(&mut cur);
    cur
}

/// Visits every scalar node bottom-up, including those inside subqueries.
pub(crate) fn walk_scalars(rel: &mut Rel, f: &mut dyn FnMut(&mut Scalar)) {
    for input in rel.inputs_mut() {
        walk_scalars(input, f);
    }
    for s in rel.scalars_mut() {
        walk_scalar(s, f);
    }
}

fn walk_scalar(e: &mut Scalar, f: &mut dyn FnMut(&mut Scalar)) {
    for c in e.children_mut() {
        walk_scalar(c, f);
    }
    if let Some(r) = e.subquery_mut() {
        walk_scalars(r, f);
    }
    f(e);
}

/// Visits every operator bottom-up, including subquery plans.
pub(crate) fn walk_rels(rel: &mut Rel, f: &mut dyn FnMut(&mut Rel)) {
    for input in rel.inputs_mut() {
        walk_rels(input, f);
    }
    for s in rel.scalars_mut() {
        walk_scalar_rels(s, f);
    }
    f(rel);
}

fn walk_scalar_rels(e: &mut Scalar, f: &mut dyn FnMut(&mut Rel)) {
    for c in e.children_mut() {
        walk_scalar_rels(c, f);
    }
    if let Some(r) = e.subquery_mut() {
        walk_rels(r, f);
    }
}

fn take(e: &mut Scalar) -> Scalar {
    std::mem::replace(e, Scalar::Literal(Literal::Null))
}

fn expand_in_list(e: &mut Scalar) {
    if !matches!(e, Scalar::InList { .. }) {
        return;
    }
    let Scalar::InList { expr, list, negated } = take(e) else { unreachable!() };
    let op = if negated { BinaryOp::NotEq } else { BinaryOp::Eq };
    let mut terms: Vec<Scalar> = list.into_iter().map(|item| Scalar::binary(op, (*expr).clone(), item)).collect();
    *e = match (terms.len(), negated) {
        (1, _) => terms.pop().expect("one term"),
        (_, false) => Scalar::Or(terms),
        (_, true) => Scalar::And(terms),
    };
}

fn expand_between(e: &mut Scalar) {
    if !matches!(e, Scalar::Between { .. }) {
        return;
    }
    let Scalar::Between { expr, low, high, negated } = take(e) else { unreachable!() };
    *e = if negated {
        Scalar::Or(vec![Scalar::binary(BinaryOp::Lt, (*expr).clone(), *low), Scalar::binary(BinaryOp::Gt, *expr, *high)])
    } else {
        Scalar::And(vec![Scalar::binary(BinaryOp::GtEq, (*expr).clone(), *low), Scalar::binary(BinaryOp::LtEq, *expr, *high)])
    };
}

fn merge_filters(rel: &mut Rel) {
    let Rel::Filter { input, predicate } = rel else { return };
    let Rel::Filter { input: inner, predicate: inner_pred } = input.as_mut() else { return };
    let merged = Scalar::And(vec![take(inner_pred), take(predicate)]);
    let inner = std::mem::replace(inner, Box::new(Rel::Values { rows: vec![], fields: vec![] }));
    *rel = Rel::Filter { input: inner, predicate: merged };
}

fn flip(op: BinaryOp) -> BinaryOp {
    match op {
        BinaryOp::Lt => BinaryOp::Gt,
        BinaryOp::Gt => BinaryOp::Lt,
        BinaryOp::LtEq => BinaryOp::GtEq,
        BinaryOp::GtEq => BinaryOp::LtEq,
        other => other,
    }
}

fn canonical_operands(e: &mut Scalar) {
    match e {
        Scalar::And(_) | Scalar::Or(_) => {
            let is_and = matches!(e, Scalar::And(_));
            let (Scalar::And(items) | Scalar::Or(items)) = take(e) else { unreachable!() };
            let mut flat = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Scalar::And(inner) if is_and => flat.extend(inner),
                    Scalar::Or(inner) if !is_and => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            let mut keyed: Vec<(String, Scalar)> = flat.into_iter().map(|s| (s.render(), s)).collect();
            keyed.sort_by(|a, b| a.0.cmp(&b.0));
            keyed.dedup_by(|a, b| a.1 == b.1);
            let mut items: Vec<Scalar> = keyed.into_iter().map(|(_, s)| s).collect();
            *e = if items.len() == 1 && items[0].is_boolean() {
                items.pop().expect("one item")
            } else if is_and {
                Scalar::And(items)
            } else {
                Scalar::Or(items)
            };
        }
        Scalar::Binary { op, left, right } => {
            let swap = match op {
                BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Plus | BinaryOp::Multiply => true,
                BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq => true,
                _ => false,
            };
            if swap && left.render() > right.render() {
                std::mem::swap(left, right);
                *op = flip(*op);
            }
        }
        _ => {}
    }
}

fn negate_cmp(op: BinaryOp) -> BinaryOp {
    match op {
        BinaryOp::Eq => BinaryOp::NotEq,
        BinaryOp::NotEq => BinaryOp::Eq,
        BinaryOp::Lt => BinaryOp::GtEq,
        BinaryOp::GtEq => BinaryOp::Lt,
        BinaryOp::Gt => BinaryOp::LtEq,
        BinaryOp::LtEq => BinaryOp::Gt,
        other => other,
    }
}

/// Logical negation pushed as far down as 3-valued logic allows.
fn negate(e: Scalar) -> Scalar {
    match e {
        Scalar::Unary { op: UnaryFn::Not, arg } if arg.is_boolean() => *arg,
        Scalar::And(v) => Scalar::Or(v.into_iter().map(negate).collect()),
        Scalar::Or(v) => Scalar::And(v.into_iter().map(negate).collect()),
        Scalar::Binary { op, left, right } if op.is_comparison() => Scalar::Binary { op: negate_cmp(op), left, right },
        Scalar::IsNull { expr, negated } => Scalar::IsNull { expr, negated: !negated },
        Scalar::Like { expr, pattern, negated } => Scalar::Like { expr, pattern, negated: !negated },
        Scalar::InList { expr, list, negated } => Scalar::InList { expr, list, negated: !negated },
        Scalar::Between { expr, low, high, negated } => Scalar::Between { expr, low, high, negated: !negated },
        Scalar::InSubquery { expr, rel, negated } => Scalar::InSubquery { expr, rel, negated: !negated },
        Scalar::Exists { rel, negated } => Scalar::Exists { rel, negated: !negated },
        other => Scalar::Unary { op: UnaryFn::Not, arg: Box::new(other) },
    }
}

fn push_not(e: &mut Scalar) {
    if let Scalar::Unary { op: UnaryFn::Not, arg } = e {
        let inner = take(arg);
        *e = negate(inner);
    }
}

/// True when the output column order cannot be changed by join reordering.
fn order_stable(rel: &Rel) -> bool {
    match rel {
        Rel::Join { .. } => false,
        Rel::Filter { input, .. } | Rel::Sort { input, .. } | Rel::Limit { input, .. } => order_stable(input),
        _ => true,
    }
}

fn remove_identity_project(rel: &mut Rel) {
    let Rel::Project { input, exprs } = rel else { return };
    let fields = input.fields();
    let identity = fields.len() == exprs.len()
        && exprs.iter().zip(&fields).all(|((e, out), f)| matches!(e, Scalar::Column { id, .. } if *id == f.id) && out.id == f.id);
    if identity && order_stable(input) {
        let input = std::mem::replace(input, Box::new(Rel::Values { rows: vec![], fields: vec![] }));
        *rel = *input;
    }
}

fn literal_cmp(op: BinaryOp, a: &Literal, b: &Literal) -> Literal {
    let (x, y) = (Value::from_literal(a), Value::from_literal(b));
    match x.sql_cmp(&y) {
        None => Literal::Null,
        Some(ord) => {
            let t = match op {
                BinaryOp::Eq => ord.is_eq(),
                BinaryOp::NotEq => ord.is_ne(),
                BinaryOp::Lt => ord.is_lt(),
                BinaryOp::LtEq => ord.is_le(),
                BinaryOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            };
            Literal::Integer(t as i64)
        }
    }
}

fn literal_truth(e: &Scalar) -> Option<Option<bool>> {
    match e {
        Scalar::Literal(l) => Some(Value::from_literal(l).truth()),
        _ => None,
    }
}

fn fold_constants(e: &mut Scalar) {
    match e {
        Scalar::Binary { op, left, right } if op.is_comparison() => {
            if let (Scalar::Literal(a), Scalar::Literal(b)) = (left.as_ref(), right.as_ref()) {
                *e = Scalar::Literal(literal_cmp(*op, a, b));
            }
        }
        Scalar::And(items) => {
            if items.iter().any(|x| literal_truth(x) == Some(Some(false))) {
                *e = Scalar::Literal(Literal::Integer(0));
                return;
            }
            let kept: Vec<Scalar> = items.iter().filter(|x| literal_truth(x) != Some(Some(true))).cloned().collect();
            match kept.len() {
                0 => *e = Scalar::Literal(Literal::Integer(1)),
                1 if kept[0].is_boolean() => *e = kept.into_iter().next().expect("one item"),
                1 => {}
                _ => *items = kept,
            }
        }
        Scalar::Or(items) => {
            if items.iter().any(|x| literal_truth(x) == Some(Some(true))) {
                *e = Scalar::Literal(Literal::Integer(1));
                return;
            }
            let kept: Vec<Scalar> = items.iter().filter(|x| literal_truth(x) != Some(Some(false))).cloned().collect();
            match kept.len() {
                0 => *e = Scalar::Literal(Literal::Integer(0)),
                1 if kept[0].is_boolean() => *e = kept.into_iter().next().expect("one item"),
                1 => {}
                _ => *items = kept,
            }
        }
        _ => {}
    }
}

fn remove_true_filter(rel: &mut Rel) {
    let Rel::Filter { input, predicate } = rel else { return };
    if literal_truth(predicate) == Some(Some(true)) {
        let input = std::mem::replace(input, Box::new(Rel::Values { rows: vec![], fields: vec![] }));
        *rel = *input;
    }
}

fn order_join_inputs(rel: &mut Rel) {
    if let Rel::Join { kind: JoinType::Inner | JoinType::Cross, left, right, .. } = rel {
        if left.render() > right.render() {
            std::mem::swap(left, right);
        }
    }
}

/// Reassigns field ids in definition order and clears output names.
fn renumber(rel: &mut Rel) {
    let mut map: HashMap<FieldId, FieldId> = HashMap::new();
    renumber_rel(rel, &mut map);
}

fn assign(map: &mut HashMap<FieldId, FieldId>, id: FieldId) -> FieldId {
    let next = FieldId(map.len() as u32);
    *map.entry(id).or_insert(next)
}

fn renumber_defs(fields: &mut [Field], map: &mut HashMap<FieldId, FieldId>) {
    for f in fields {
        f.id = assign(map, f.id);
        f.name.clear();
    }
}

fn renumber_rel(rel: &mut Rel, map: &mut HashMap<FieldId, FieldId>) {
    for input in rel.inputs_mut() {
        renumber_rel(input, map);
    }
    for s in rel.scalars_mut() {
        renumber_scalar(s, map);
    }
    match rel {
        Rel::Scan { fields, .. } | Rel::Values { fields, .. } | Rel::SetOp { fields, .. } => renumber_defs(fields, map),
        Rel::Project { exprs, .. } => {
            for (_, f) in exprs {
                f.id = assign(map, f.id);
                f.name.clear();
            }
        }
        Rel::Aggregate { group, aggs, .. } => {
            for f in group.iter_mut().map(|(_, f)| f).chain(aggs.iter_mut().map(|(_, f)| f)) {
                f.id = assign(map, f.id);
                f.name.clear();
            }
        }
        _ => {}
    }
}

fn renumber_scalar(e: &mut Scalar, map: &mut HashMap<FieldId, FieldId>) {
    if let Scalar::Column { id, .. } = e {
        *id = assign(map, *id);
        return;
    }
    for c in e.children_mut() {
        renumber_scalar(c, map);
    }
    if let Some(r) = e.subquery_mut() {
        renumber_rel(r, map);
    }
}
