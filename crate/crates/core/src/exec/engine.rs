//! Materializing interpreter over operator trees.

use std::cmp::Ordering;
use std::collections::HashMap;

use super::database::Database;
use super::value::Value;
use super::{ExecError, ExecErrorClass};
use crate::plan::{AggCall, AggFunc, FieldId, JoinType, Rel, Scalar, ScalarFunc, UnaryFn};
use crate::sql::ast::{BinaryOp, SetOperator};

type EResult<T> = Result<T, ExecError>;

fn runtime(message: impl Into<String>) -> ExecError {
    ExecError { class: ExecErrorClass::Runtime, message: message.into() }
}

pub(crate) struct Rows {
    pub layout: Vec<FieldId>,
    pub rows: Vec<Vec<Value>>,
}

/// Row context for expression evaluation; outer frames serve correlated
/// references.
#[derive(Clone, Copy)]
struct Frame<'a> {
    layout: &'a [FieldId],
    row: &'a [Value],
    parent: Option<&'a Frame<'a>>,
}

fn lookup<'a>(mut frame: Option<&'a Frame<'a>>, id: FieldId) -> Option<&'a Value> {
    while let Some(f) = frame {
        if let Some(i) = f.layout.iter().position(|x| *x == id) {
            return Some(&f.row[i]);
        }
        frame = f.parent;
    }
    None
}

/// Hashable identity of a value for grouping and set operations: NULLs
/// group together, and integral reals equal the matching integer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum KeyPart {
    Null,
    Int(i64),
    Real(u64),
    Text(String),
}

pub(crate) fn key_part(v: &Value) -> KeyPart {
    match v {
        Value::Null => KeyPart::Null,
        Value::Integer(i) => KeyPart::Int(*i),
        Value::Real(r) => {
            if r.fract() == 0.0 && r.abs() < 9.0e15 {
                KeyPart::Int(*r as i64)
            } else if *r == 0.0 {
                KeyPart::Int(0)
            } else {
                KeyPart::Real(r.to_bits())
            }
        }
        Value::Text(s) => KeyPart::Text(s.clone()),
    }
}

fn row_key(row: &[Value]) -> Vec<KeyPart> {
    row.iter().map(key_part).collect()
}

pub(crate) fn run(rel: &Rel, db: &Database) -> EResult<Rows> {
    Engine { db }.rel(rel, None)
}

struct Engine<'d> {
    db: &'d Database,
}

impl Engine<'_> {
    fn rel(&self, rel: &Rel, outer: Option<&Frame<'_>>) -> EResult<Rows> {
        let layout: Vec<FieldId> = rel.fields().iter().map(|f| f.id).collect();
        let rows = match rel {
            Rel::Scan { table, .. } => {
                self.db.rows(table).ok_or_else(|| runtime(format!("no such table: {table}")))?.to_vec()
            }
            Rel::Values { rows, .. } => {
                let mut out = Vec::with_capacity(rows.len());
                for r in rows {
                    out.push(r.iter().map(|e| self.eval(e, outer)).collect::<EResult<Vec<_>>>()?);
                }
                out
            }
            Rel::Filter { input, predicate } => {
                let inp = self.rel(input, outer)?;
                let mut out = Vec::new();
                for row in inp.rows {
                    let f = Frame { layout: &inp.layout, row: &row, parent: outer };
                    if self.eval(predicate, Some(&f))?.truth() == Some(true) {
                        out.push(row);
                    }
                }
                out
            }
            Rel::Project { input, exprs } => {
                let inp = self.rel(input, outer)?;
                let mut out = Vec::with_capacity(inp.rows.len());
                for row in &inp.rows {
                    let f = Frame { layout: &inp.layout, row, parent: outer };
                    out.push(exprs.iter().map(|(e, _)| self.eval(e, Some(&f))).collect::<EResult<Vec<_>>>()?);
                }
                out
            }
            Rel::Join { kind, left, right, on } => {
                let l = self.rel(left, outer)?;
                let r = self.rel(right, outer)?;
                let mut out = Vec::new();
                let width = r.layout.len();
                for lrow in &l.rows {
                    let mut matched = false;
                    for rrow in &r.rows {
                        let mut row = lrow.clone();
                        row.extend(rrow.iter().cloned());
                        let keep = match on {
                            Some(c) => {
                                let f = Frame { layout: &layout, row: &row, parent: outer };
                                self.eval(c, Some(&f))?.truth() == Some(true)
                            }
                            None => true,
                        };
                        if keep {
                            matched = true;
                            out.push(row);
                        }
                    }
                    if *kind == JoinType::Left && !matched {
                        let mut row = lrow.clone();
                        row.extend(std::iter::repeat_n(Value::Null, width));
                        out.push(row);
                    }
                }
                out
            }
            Rel::Aggregate { input, group, aggs } => self.aggregate(input, group, aggs, outer)?,
            Rel::Sort { input, keys } => {
                let inp = self.rel(input, outer)?;
                let mut keyed = Vec::with_capacity(inp.rows.len());
                for row in inp.rows {
                    let f = Frame { layout: &inp.layout, row: &row, parent: outer };
                    let k = keys.iter().map(|k| self.eval(&k.expr, Some(&f))).collect::<EResult<Vec<_>>>()?;
                    keyed.push((k, row));
                }
                keyed.sort_by(|(a, _), (b, _)| {
                    for (i, k) in keys.iter().enumerate() {
                        let o = a[i].total_cmp(&b[i]);
                        let o = if k.desc { o.reverse() } else { o };
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                    Ordering::Equal
                });
                keyed.into_iter().map(|(_, r)| r).collect()
            }
            Rel::Limit { input, count, offset } => {
                let inp = self.rel(input, outer)?;
                inp.rows.into_iter().skip(*offset as usize).take((*count).min(usize::MAX as u64) as usize).collect()
            }
            Rel::SetOp { op, left, right, .. } => {
                let l = self.rel(left, outer)?.rows;
                let r = self.rel(right, outer)?.rows;
                set_op(*op, l, r)
            }
        };
        Ok(Rows { layout, rows })
    }

    fn aggregate(
        &self,
        input: &Rel,
        group: &[(Scalar, crate::plan::Field)],
        aggs: &[(AggCall, crate::plan::Field)],
        outer: Option<&Frame<'_>>,
    ) -> EResult<Vec<Vec<Value>>> {
        let inp = self.rel(input, outer)?;
        let mut order: Vec<Vec<KeyPart>> = Vec::new();
        let mut groups: HashMap<Vec<KeyPart>, (Vec<Value>, Vec<usize>)> = HashMap::new();
        for (i, row) in inp.rows.iter().enumerate() {
            let f = Frame { layout: &inp.layout, row, parent: outer };
            let vals = group.iter().map(|(e, _)| self.eval(e, Some(&f))).collect::<EResult<Vec<_>>>()?;
            let key = row_key(&vals);
            match groups.get_mut(&key) {
                Some(g) => g.1.push(i),
                None => {
                    order.push(key.clone());
                    groups.insert(key, (vals, vec![i]));
                }
            }
        }
        if group.is_empty() && order.is_empty() {
            order.push(Vec::new());
            groups.insert(Vec::new(), (Vec::new(), Vec::new()));
        }
        // bare columns follow the row chosen by a lone MIN or MAX
        let extreme: Vec<usize> =
            aggs.iter().enumerate().filter(|(_, (a, _))| matches!(a.func, AggFunc::Min | AggFunc::Max)).map(|(i, _)| i).collect();
        let mut out = Vec::with_capacity(order.len());
        for key in order {
            let (vals, members) = &groups[&key];
            let mut args: Vec<Vec<Value>> = Vec::with_capacity(aggs.len());
            for (a, _) in aggs {
                let mut col = Vec::with_capacity(members.len());
                for &i in members {
                    let f = Frame { layout: &inp.layout, row: &inp.rows[i], parent: outer };
                    col.push(match &a.arg {
                        Some(e) => self.eval(e, Some(&f))?,
                        None => Value::Null,
                    });
                }
                args.push(col);
            }
            let chosen: Option<usize> = if members.is_empty() {
                None
            } else if extreme.len() == 1 {
                let i = extreme[0];
                let want = if aggs[i].0.func == AggFunc::Max { Ordering::Greater } else { Ordering::Less };
                let mut best: Option<usize> = None;
                for (pos, v) in args[i].iter().enumerate() {
                    if v.is_null() {
                        continue;
                    }
                    if best.is_none_or(|b| v.total_cmp(&args[i][b]) == want) {
                        best = Some(pos);
                    }
                }
                Some(best.unwrap_or(members.len() - 1))
            } else {
                Some(members.len() - 1)
            };
            let mut row = vals.clone();
            for (j, (a, _)) in aggs.iter().enumerate() {
                row.push(if a.func == AggFunc::Bare {
                    chosen.map(|p| args[j][p].clone()).unwrap_or(Value::Null)
                } else {
                    finish_aggregate(a, &args[j], members.len())?
                });
            }
            out.push(row);
        }
        Ok(out)
    }

    fn eval(&self, e: &Scalar, frame: Option<&Frame<'_>>) -> EResult<Value> {
        Ok(match e {
            Scalar::Column { id, label } => {
                lookup(frame, *id).cloned().ok_or_else(|| runtime(format!("column {label} is not available here")))?
            }
            Scalar::Literal(l) => Value::from_literal(l),
            Scalar::Unary { op: UnaryFn::Neg, arg } => match self.eval(arg, frame)? {
                Value::Null => Value::Null,
                Value::Integer(i) => i.checked_neg().map(Value::Integer).unwrap_or(Value::Real(-(i as f64))),
                Value::Real(r) => Value::Real(-r),
                Value::Text(_) => return Err(runtime("cannot negate a text value")),
            },
            Scalar::Unary { op: UnaryFn::Not, arg } => match self.eval(arg, frame)?.truth() {
                None => Value::Null,
                Some(b) => Value::bool(!b),
            },
            Scalar::Binary { op, left, right } => {
                let a = self.eval(left, frame)?;
                let b = self.eval(right, frame)?;
                binary(*op, &a, &b)?
            }
            Scalar::And(items) => {
                let mut unknown = false;
                for x in items {
                    match self.eval(x, frame)?.truth() {
                        Some(false) => return Ok(Value::bool(false)),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown {
                    Value::Null
                } else {
                    Value::bool(true)
                }
            }
            Scalar::Or(items) => {
                let mut unknown = false;
                for x in items {
                    match self.eval(x, frame)?.truth() {
                        Some(true) => return Ok(Value::bool(true)),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown {
                    Value::Null
                } else {
                    Value::bool(false)
                }
            }
            Scalar::Func { func, args } => {
                let vals = args.iter().map(|a| self.eval(a, frame)).collect::<EResult<Vec<_>>>()?;
                scalar_func(*func, &vals)?
            }
            Scalar::Case { operand, branches, else_result } => {
                let base = match operand {
                    Some(o) => Some(self.eval(o, frame)?),
                    None => None,
                };
                for (w, t) in branches {
                    let wv = self.eval(w, frame)?;
                    let hit = match &base {
                        Some(b) => b.sql_cmp(&wv) == Some(Ordering::Equal),
                        None => wv.truth() == Some(true),
                    };
                    if hit {
                        return self.eval(t, frame);
                    }
                }
                match else_result {
                    Some(x) => self.eval(x, frame)?,
                    None => Value::Null,
                }
            }
            Scalar::InList { expr, list, negated } => {
                let x = self.eval(expr, frame)?;
                let items = list.iter().map(|i| self.eval(i, frame)).collect::<EResult<Vec<_>>>()?;
                membership(&x, &items, *negated)
            }
            Scalar::Between { expr, low, high, negated } => {
                let x = self.eval(expr, frame)?;
                let lo = binary(BinaryOp::GtEq, &x, &self.eval(low, frame)?)?;
                let hi = binary(BinaryOp::LtEq, &x, &self.eval(high, frame)?)?;
                let both = match (lo.truth(), hi.truth()) {
                    (Some(false), _) | (_, Some(false)) => Some(false),
                    (Some(true), Some(true)) => Some(true),
                    _ => None,
                };
                match both {
                    None => Value::Null,
                    Some(b) => Value::bool(b != *negated),
                }
            }
            Scalar::Like { expr, pattern, negated } => {
                let x = self.eval(expr, frame)?;
                let p = self.eval(pattern, frame)?;
                if x.is_null() || p.is_null() {
                    Value::Null
                } else {
                    Value::bool(like(&p.to_string(), &x.to_string()) != *negated)
                }
            }
            Scalar::IsNull { expr, negated } => Value::bool(self.eval(expr, frame)?.is_null() != *negated),
            Scalar::Subquery(rel) => {
                let rows = self.rel(rel, frame)?;
                rows.rows.into_iter().next().and_then(|r| r.into_iter().next()).unwrap_or(Value::Null)
            }
            Scalar::InSubquery { expr, rel, negated } => {
                let x = self.eval(expr, frame)?;
                let rows = self.rel(rel, frame)?;
                let items: Vec<Value> = rows.rows.into_iter().filter_map(|r| r.into_iter().next()).collect();
                membership(&x, &items, *negated)
            }
            Scalar::Exists { rel, negated } => {
                let rows = self.rel(rel, frame)?;
                Value::bool(rows.rows.is_empty() == *negated)
            }
        })
    }
}

fn set_op(op: SetOperator, l: Vec<Vec<Value>>, r: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
    use std::collections::HashSet;
    match op {
        SetOperator::UnionAll => l.into_iter().chain(r).collect(),
        SetOperator::Union => {
            let mut seen = HashSet::new();
            l.into_iter().chain(r).filter(|row| seen.insert(row_key(row))).collect()
        }
        SetOperator::Except | SetOperator::Intersect => {
            let other: HashSet<Vec<KeyPart>> = r.iter().map(|row| row_key(row)).collect();
            let keep_present = op == SetOperator::Intersect;
            let mut seen = HashSet::new();
            l.into_iter().filter(|row| {
                let k = row_key(row);
                other.contains(&k) == keep_present && seen.insert(k)
            })
            .collect()
        }
    }
}

fn membership(x: &Value, items: &[Value], negated: bool) -> Value {
    if x.is_null() {
        return Value::Null;
    }
    let mut unknown = false;
    for i in items {
        match x.sql_cmp(i) {
            Some(Ordering::Equal) => return Value::bool(!negated),
            None => unknown = true,
            _ => {}
        }
    }
    if unknown {
        Value::Null
    } else {
        Value::bool(negated)
    }
}

fn finish_aggregate(a: &AggCall, values: &[Value], rows: usize) -> EResult<Value> {
    if a.func == AggFunc::CountStar {
        return Ok(Value::Integer(rows as i64));
    }
    let mut vals: Vec<&Value> = values.iter().filter(|v| !v.is_null()).collect();
    if a.distinct {
        let mut seen = std::collections::HashSet::new();
        vals.retain(|v| seen.insert(key_part(v)));
    }
    Ok(match a.func {
        AggFunc::Count => Value::Integer(vals.len() as i64),
        AggFunc::Sum | AggFunc::Avg => {
            if vals.is_empty() {
                return Ok(Value::Null);
            }
            let mut int_sum: Option<i64> = Some(0);
            let mut real_sum = 0.0;
            for v in &vals {
                match v {
                    Value::Integer(i) => {
                        int_sum = int_sum.and_then(|s| s.checked_add(*i));
                        real_sum += *i as f64;
                    }
                    Value::Real(r) => {
                        int_sum = None;
                        real_sum += r;
                    }
                    _ => return Err(runtime(format!("{}() over a text value", a.func.name()))),
                }
            }
            let all_int = vals.iter().all(|v| matches!(v, Value::Integer(_)));
            if a.func == AggFunc::Avg {
                Value::Real(real_sum / vals.len() as f64)
            } else if all_int {
                Value::Integer(int_sum.ok_or_else(|| runtime("integer overflow"))?)
            } else {
                Value::Real(real_sum)
            }
        }
        AggFunc::Min | AggFunc::Max => {
            let want = if a.func == AggFunc::Max { Ordering::Greater } else { Ordering::Less };
            let mut best: Option<&Value> = None;
            for v in vals {
                if best.is_none_or(|b| v.total_cmp(b) == want) {
                    best = Some(v);
                }
            }
            best.cloned().unwrap_or(Value::Null)
        }
        AggFunc::CountStar | AggFunc::Bare => unreachable!("handled by caller"),
    })
}

fn as_number(v: &Value, what: &str) -> EResult<Value> {
    match v {
        Value::Text(_) => Err(runtime(format!("{what} on a text value"))),
        other => Ok(other.clone()),
    }
}

pub(crate) fn binary(op: BinaryOp, a: &Value, b: &Value) -> EResult<Value> {
    if op.is_comparison() {
        return Ok(match a.sql_cmp(b) {
            None => Value::Null,
            Some(o) => Value::bool(match op {
                BinaryOp::Eq => o.is_eq(),
                BinaryOp::NotEq => o.is_ne(),
                BinaryOp::Lt => o.is_lt(),
                BinaryOp::LtEq => o.is_le(),
                BinaryOp::Gt => o.is_gt(),
                _ => o.is_ge(),
            }),
        });
    }
    if a.is_null() || b.is_null() {
        return Ok(Value::Null);
    }
    if op == BinaryOp::Concat {
        return Ok(Value::Text(format!("{a}{b}")));
    }
    let (a, b) = (as_number(a, "arithmetic")?, as_number(b, "arithmetic")?);
    if let (Value::Integer(x), Value::Integer(y)) = (&a, &b) {
        let (x, y) = (*x, *y);
        let r = match op {
            BinaryOp::Plus => x.checked_add(y),
            BinaryOp::Minus => x.checked_sub(y),
            BinaryOp::Multiply => x.checked_mul(y),
            BinaryOp::Divide => {
                if y == 0 {
                    return Ok(Value::Null);
                }
                x.checked_div(y)
            }
            BinaryOp::Modulo => {
                if y == 0 {
                    return Ok(Value::Null);
                }
                Some(x.wrapping_rem(y))
            }
            _ => unreachable!("non-arithmetic operator"),
        };
        return Ok(match r {
            Some(v) => Value::Integer(v),
            None => real_arith(op, x as f64, y as f64),
        });
    }
    let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
    Ok(real_arith(op, x, y))
}

fn real_arith(op: BinaryOp, x: f64, y: f64) -> Value {
    match op {
        BinaryOp::Plus => Value::Real(x + y),
        BinaryOp::Minus => Value::Real(x - y),
        BinaryOp::Multiply => Value::Real(x * y),
        BinaryOp::Divide => {
            if y == 0.0 {
                Value::Null
            } else {
                Value::Real(x / y)
            }
        }
        _ => {
            let (xi, yi) = (x as i64, y as i64);
            if yi == 0 {
                Value::Null
            } else {
                Value::Real(xi.wrapping_rem(yi) as f64)
            }
        }
    }
}

/// SQL LIKE with `%` and `_`, ASCII case-insensitive.
pub fn like(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().map(|c| c.to_ascii_lowercase()).collect();
    let t: Vec<char> = text.chars().map(|c| c.to_ascii_lowercase()).collect();
    // dp[j]: pattern prefix of length i matches text prefix of length j
    let mut dp = vec![false; t.len() + 1];
    dp[0] = true;
    for &pc in &p {
        let mut next = vec![false; t.len() + 1];
        match pc {
            '%' => {
                let mut any = false;
                for j in 0..=t.len() {
                    any |= dp[j];
                    next[j] = any;
                }
            }
            _ => {
                for j in 1..=t.len() {
                    next[j] = dp[j - 1] && (pc == '_' || pc == t[j - 1]);
                }
            }
        }
        dp = next;
    }
    dp[t.len()]
}

fn text_of(v: &Value) -> String {
    v.to_string()
}

fn scalar_func(func: ScalarFunc, args: &[Value]) -> EResult<Value> {
    use ScalarFunc::*;
    let null_in = args.iter().any(|v| v.is_null());
    Ok(match func {
        Coalesce | Ifnull => args.iter().find(|v| !v.is_null()).cloned().unwrap_or(Value::Null),
        Nullif => {
            if args[0].sql_cmp(&args[1]) == Some(Ordering::Equal) {
                Value::Null
            } else {
                args[0].clone()
            }
        }
        _ if null_in => Value::Null,
        Abs => match &args[0] {
            Value::Integer(i) => i.checked_abs().map(Value::Integer).ok_or_else(|| runtime("integer overflow"))?,
            Value::Real(r) => Value::Real(r.abs()),
            _ => return Err(runtime("abs() on a text value")),
        },
        Length => match &args[0] {
            Value::Text(s) => Value::Integer(s.chars().count() as i64),
            other => Value::Integer(other.to_string().chars().count() as i64),
        },
        Lower => Value::Text(text_of(&args[0]).to_ascii_lowercase()),
        Upper => Value::Text(text_of(&args[0]).to_ascii_uppercase()),
        Trim => Value::Text(text_of(&args[0]).trim_matches(' ').to_string()),
        Round => {
            let x = as_number(&args[0], "round()")?.as_f64().unwrap_or(0.0);
            let digits = match args.get(1) {
                Some(d) => as_number(d, "round()")?.as_f64().unwrap_or(0.0).max(0.0) as i32,
                None => 0,
            };
            let m = 10f64.powi(digits);
            Value::Real((x * m).round() / m)
        }
        Substr => {
            let s: Vec<char> = text_of(&args[0]).chars().collect();
            let n = s.len() as i64;
            let start = as_number(&args[1], "substr()")?.as_f64().unwrap_or(0.0) as i64;
            let len = match args.get(2) {
                Some(l) => as_number(l, "substr()")?.as_f64().unwrap_or(0.0) as i64,
                None => n.max(0) + 1,
            };
            // SQLite: 1-based, negative start counts from the end
            let mut from = if start > 0 { start - 1 } else if start < 0 { n + start } else { -1 };
            let mut to = from + len;
            if len < 0 {
                to = from;
                from += len;
            }
            let (from, to) = (from.clamp(0, n), to.clamp(0, n));
            Value::Text(s[from as usize..to.max(from) as usize].iter().collect())
        }
        Instr => {
            let (h, n) = (text_of(&args[0]), text_of(&args[1]));
            match h.find(&n) {
                Some(b) => Value::Integer(h[..b].chars().count() as i64 + 1),
                None => Value::Integer(0),
            }
        }
        Replace => {
            let (s, from, to) = (text_of(&args[0]), text_of(&args[1]), text_of(&args[2]));
            if from.is_empty() {
                Value::Text(s)
            } else {
                Value::Text(s.replace(&from, &to))
            }
        }
        Max | Min => {
            let want = if func == Max { Ordering::Greater } else { Ordering::Less };
            let mut best = &args[0];
            for v in &args[1..] {
                if v.total_cmp(best) == want {
                    best = v;
                }
            }
            best.clone()
        }
    })
}
