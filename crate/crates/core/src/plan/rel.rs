//! Typed relational operator tree.
//!
//! Fields are identified by a plan-unique [`FieldId`]; expressions refer to
//! fields by id, so pass-through columns keep the id of the column they copy.
//! Every field also carries a label naming its origin (`table.column` for
//! base columns, the rendered defining expression otherwise), which is what
//! the exported graph shows.

use serde::Serialize;
use thiserror::Error;

use crate::sql::ast::{BinaryOp, Literal, SetOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FieldId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    pub id: FieldId,
    pub label: String,
    /// Output column name; empty after normalization.
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum JoinType {
    Inner,
    Left,
    Cross,
}

impl JoinType {
    pub fn name(self) -> &'static str {
        match self {
            JoinType::Inner => "inner",
            JoinType::Left => "left",
            JoinType::Cross => "cross",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AggFunc {
    Count,
    CountStar,
    Sum,
    Avg,
    Min,
    Max,
    /// A non-aggregated column under grouping (SQLite bare column).
    Bare,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count | AggFunc::CountStar => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
            AggFunc::Bare => "ANY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggCall {
    pub func: AggFunc,
    pub distinct: bool,
    pub arg: Option<Scalar>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ScalarFunc {
    Abs,
    Length,
    Lower,
    Upper,
    Round,
    Substr,
    Coalesce,
    Ifnull,
    Nullif,
    Instr,
    Replace,
    Trim,
    Max,
    Min,
}

impl ScalarFunc {
    pub fn lookup(name: &str) -> Option<ScalarFunc> {
        Some(match name {
            "abs" => ScalarFunc::Abs,
            "length" => ScalarFunc::Length,
            "lower" => ScalarFunc::Lower,
            "upper" => ScalarFunc::Upper,
            "round" => ScalarFunc::Round,
            "substr" | "substring" => ScalarFunc::Substr,
            "coalesce" => ScalarFunc::Coalesce,
            "ifnull" => ScalarFunc::Ifnull,
            "nullif" => ScalarFunc::Nullif,
            "instr" => ScalarFunc::Instr,
            "replace" => ScalarFunc::Replace,
            "trim" => ScalarFunc::Trim,
            "max" => ScalarFunc::Max,
            "min" => ScalarFunc::Min,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarFunc::Abs => "ABS",
            ScalarFunc::Length => "LENGTH",
            ScalarFunc::Lower => "LOWER",
            ScalarFunc::Upper => "UPPER",
            ScalarFunc::Round => "ROUND",
            ScalarFunc::Substr => "SUBSTR",
            ScalarFunc::Coalesce => "COALESCE",
            ScalarFunc::Ifnull => "IFNULL",
            ScalarFunc::Nullif => "NULLIF",
            ScalarFunc::Instr => "INSTR",
            ScalarFunc::Replace => "REPLACE",
            ScalarFunc::Trim => "TRIM",
            ScalarFunc::Max => "MAX",
            ScalarFunc::Min => "MIN",
        }
    }

    /// Accepted argument counts, inclusive.
    pub fn arity(self) -> (usize, usize) {
        match self {
            ScalarFunc::Abs | ScalarFunc::Length | ScalarFunc::Lower | ScalarFunc::Upper | ScalarFunc::Trim => (1, 1),
            ScalarFunc::Round => (1, 2),
            ScalarFunc::Substr => (2, 3),
            ScalarFunc::Coalesce => (2, usize::MAX),
            ScalarFunc::Ifnull | ScalarFunc::Nullif | ScalarFunc::Instr => (2, 2),
            ScalarFunc::Replace => (3, 3),
            ScalarFunc::Max | ScalarFunc::Min => (2, usize::MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UnaryFn {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Scalar {
    Column { id: FieldId, label: String },
    Literal(Literal),
    Unary { op: UnaryFn, arg: Box<Scalar> },
    /// Arithmetic, comparison and concatenation.
    Binary { op: BinaryOp, left: Box<Scalar>, right: Box<Scalar> },
    And(Vec<Scalar>),
    Or(Vec<Scalar>),
    Func { func: ScalarFunc, args: Vec<Scalar> },
    Case { operand: Option<Box<Scalar>>, branches: Vec<(Scalar, Scalar)>, else_result: Option<Box<Scalar>> },
    InList { expr: Box<Scalar>, list: Vec<Scalar>, negated: bool },
    Between { expr: Box<Scalar>, low: Box<Scalar>, high: Box<Scalar>, negated: bool },
    Like { expr: Box<Scalar>, pattern: Box<Scalar>, negated: bool },
    IsNull { expr: Box<Scalar>, negated: bool },
    Subquery(Box<Rel>),
    InSubquery { expr: Box<Scalar>, rel: Box<Rel>, negated: bool },
    Exists { rel: Box<Rel>, negated: bool },
}

impl Scalar {
    pub fn column(f: &Field) -> Scalar {
        Scalar::Column { id: f.id, label: f.label.clone() }
    }

    pub fn binary(op: BinaryOp, left: Scalar, right: Scalar) -> Scalar {
        Scalar::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    /// True for expressions whose value is always 0, 1 or NULL.
    pub fn is_boolean(&self) -> bool {
        match self {
            Scalar::Binary { op, .. } => op.is_comparison(),
            Scalar::Unary { op: UnaryFn::Not, .. }
            | Scalar::And(_)
            | Scalar::Or(_)
            | Scalar::InList { .. }
            | Scalar::Between { .. }
            | Scalar::Like { .. }
            | Scalar::IsNull { .. }
            | Scalar::InSubquery { .. }
            | Scalar::Exists { .. } => true,
            _ => false,
        }
    }

    /// Direct scalar children in a fixed order.
    pub fn children_mut(&mut self) -> Vec<&mut Scalar> {
        match self {
            Scalar::Column { .. } | Scalar::Literal(_) | Scalar::Subquery(_) | Scalar::Exists { .. } => vec![],
            Scalar::Unary { arg, .. } => vec![arg],
            Scalar::Binary { left, right, .. } => vec![left, right],
            Scalar::And(v) | Scalar::Or(v) => v.iter_mut().collect(),
            Scalar::Func { args, .. } => args.iter_mut().collect(),
            Scalar::Case { operand, branches, else_result } => {
                let mut out: Vec<&mut Scalar> = Vec::new();
                if let Some(o) = operand {
                    out.push(o);
                }
                for (w, t) in branches {
                    out.push(w);
                    out.push(t);
                }
                if let Some(e) = else_result {
                    out.push(e);
                }
                out
            }
            Scalar::InList { expr, list, .. } => {
                let mut out: Vec<&mut Scalar> = vec![expr];
                out.extend(list.iter_mut());
                out
            }
            Scalar::Between { expr, low, high, .. } => vec![expr, low, high],
            Scalar::Like { expr, pattern, .. } => vec![expr, pattern],
            Scalar::IsNull { expr, .. } => vec![expr],
            Scalar::InSubquery { expr, .. } => vec![expr],
        }
    }

    pub fn subquery_mut(&mut self) -> Option<&mut Rel> {
        match self {
            Scalar::Subquery(r) | Scalar::InSubquery { rel: r, .. } | Scalar::Exists { rel: r, .. } => Some(r),
            _ => None,
        }
    }

    /// Label-based rendering; insensitive to field ids and output names.
    pub fn render(&self) -> String {
        let mut s = String::new();
        render_scalar(self, &mut s);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SortKey {
    pub expr: Scalar,
    pub desc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Rel {
    Scan { table: String, fields: Vec<Field> },
    /// Constant rows; `SELECT` without `FROM` reads one empty row.
    Values { rows: Vec<Vec<Scalar>>, fields: Vec<Field> },
    Filter { input: Box<Rel>, predicate: Scalar },
    Project { input: Box<Rel>, exprs: Vec<(Scalar, Field)> },
    Join { kind: JoinType, left: Box<Rel>, right: Box<Rel>, on: Option<Scalar> },
    Aggregate { input: Box<Rel>, group: Vec<(Scalar, Field)>, aggs: Vec<(AggCall, Field)> },
    Sort { input: Box<Rel>, keys: Vec<SortKey> },
    Limit { input: Box<Rel>, count: u64, offset: u64 },
    SetOp { op: SetOperator, left: Box<Rel>, right: Box<Rel>, fields: Vec<Field> },
}

impl Rel {
    /// Output fields in column order.
    pub fn fields(&self) -> Vec<Field> {
        match self {
            Rel::Scan { fields, .. } | Rel::Values { fields, .. } | Rel::SetOp { fields, .. } => fields.clone(),
            Rel::Filter { input, .. } | Rel::Sort { input, .. } | Rel::Limit { input, .. } => input.fields(),
            Rel::Project { exprs, .. } => exprs.iter().map(|(_, f)| f.clone()).collect(),
            Rel::Join { left, right, .. } => {
                let mut f = left.fields();
                f.extend(right.fields());
                f
            }
            Rel::Aggregate { group, aggs, .. } => {
                group.iter().map(|(_, f)| f.clone()).chain(aggs.iter().map(|(_, f)| f.clone())).collect()
            }
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Rel::Scan { fields, .. } | Rel::Values { fields, .. } | Rel::SetOp { fields, .. } => fields.len(),
            Rel::Filter { input, .. } | Rel::Sort { input, .. } | Rel::Limit { input, .. } => input.arity(),
            Rel::Project { exprs, .. } => exprs.len(),
            Rel::Join { left, right, .. } => left.arity() + right.arity(),
            Rel::Aggregate { group, aggs, .. } => group.len() + aggs.len(),
        }
    }

    pub fn inputs_mut(&mut self) -> Vec<&mut Rel> {
        match self {
            Rel::Scan { .. } | Rel::Values { .. } => vec![],
            Rel::Filter { input, .. }
            | Rel::Project { input, .. }
            | Rel::Aggregate { input, .. }
            | Rel::Sort { input, .. }
            | Rel::Limit { input, .. } => vec![input],
            Rel::Join { left, right, .. } | Rel::SetOp { left, right, .. } => vec![left, right],
        }
    }

    pub fn inputs(&self) -> Vec<&Rel> {
        match self {
            Rel::Scan { .. } | Rel::Values { .. } => vec![],
            Rel::Filter { input, .. }
            | Rel::Project { input, .. }
            | Rel::Aggregate { input, .. }
            | Rel::Sort { input, .. }
            | Rel::Limit { input, .. } => vec![input],
            Rel::Join { left, right, .. } | Rel::SetOp { left, right, .. } => vec![left, right],
        }
    }

    /// Expressions owned directly by this operator.
    pub fn scalars_mut(&mut self) -> Vec<&mut Scalar> {
        match self {
            Rel::Scan { .. } | Rel::Limit { .. } | Rel::SetOp { .. } => vec![],
            Rel::Values { rows, .. } => rows.iter_mut().flatten().collect(),
            Rel::Filter { predicate, .. } => vec![predicate],
            Rel::Project { exprs, .. } => exprs.iter_mut().map(|(e, _)| e).collect(),
            Rel::Join { on, .. } => on.iter_mut().collect(),
            Rel::Aggregate { group, aggs, .. } => group
                .iter_mut()
                .map(|(e, _)| e)
                .chain(aggs.iter_mut().filter_map(|(a, _)| a.arg.as_mut()))
                .collect(),
            Rel::Sort { keys, .. } => keys.iter_mut().map(|k| &mut k.expr).collect(),
        }
    }

    /// Label-based rendering used as the ordering digest.
    pub fn render(&self) -> String {
        let mut s = String::new();
        render_rel(self, &mut s);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RotErrorClass {
    UnresolvedColumn,
    UnresolvedTable,
    AmbiguousName,
    Unsupported,
}

impl RotErrorClass {
    pub fn name(self) -> &'static str {
        match self {
            RotErrorClass::UnresolvedColumn => "unresolved-column",
            RotErrorClass::UnresolvedTable => "unresolved-table",
            RotErrorClass::AmbiguousName => "ambiguous-name",
            RotErrorClass::Unsupported => "unsupported",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("{}: {message}", class.name())]
pub struct RotError {
    pub class: RotErrorClass,
    pub message: String,
}

impl RotError {
    pub fn new(class: RotErrorClass, message: impl Into<String>) -> Self {
        RotError { class, message: message.into() }
    }

    pub fn unsupported(message: impl Into<String>) -> Self {
        RotError::new(RotErrorClass::Unsupported, message)
    }
}

pub(crate) fn literal_text(l: &Literal) -> String {
    crate::sql::literal_attr(l)
}

fn render_list(items: &[Scalar], sep: &str, out: &mut String) {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        render_scalar(e, out);
    }
}

fn render_scalar(e: &Scalar, out: &mut String) {
    match e {
        Scalar::Column { label, .. } => out.push_str(label),
        Scalar::Literal(l) => out.push_str(&literal_text(l)),
        Scalar::Unary { op, arg } => {
            out.push_str(match op {
                UnaryFn::Neg => "(-",
                UnaryFn::Not => "(NOT ",
            });
            render_scalar(arg, out);
            out.push(')');
        }
        Scalar::Binary { op, left, right } => {
            out.push('(');
            render_scalar(left, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            render_scalar(right, out);
            out.push(')');
        }
        Scalar::And(v) => {
            out.push('(');
            render_list(v, " AND ", out);
            out.push(')');
        }
        Scalar::Or(v) => {
            out.push('(');
            render_list(v, " OR ", out);
            out.push(')');
        }
        Scalar::Func { func, args } => {
            out.push_str(func.name());
            out.push('(');
            render_list(args, ", ", out);
            out.push(')');
        }
        Scalar::Case { operand, branches, else_result } => {
            out.push_str("CASE");
            if let Some(o) = operand {
                out.push(' ');
                render_scalar(o, out);
            }
            for (w, t) in branches {
                out.push_str(" WHEN ");
                render_scalar(w, out);
                out.push_str(" THEN ");
                render_scalar(t, out);
            }
            if let Some(x) = else_result {
                out.push_str(" ELSE ");
                render_scalar(x, out);
            }
            out.push_str(" END");
        }
        Scalar::InList { expr, list, negated } => {
            out.push('(');
            render_scalar(expr, out);
            out.push_str(if *negated { " NOT IN (" } else { " IN (" });
            render_list(list, ", ", out);
            out.push_str("))");
        }
        Scalar::Between { expr, low, high, negated } => {
            out.push('(');
            render_scalar(expr, out);
            out.push_str(if *negated { " NOT BETWEEN " } else { " BETWEEN " });
            render_scalar(low, out);
            out.push_str(" AND ");
            render_scalar(high, out);
            out.push(')');
        }
        Scalar::Like { expr, pattern, negated } => {
            out.push('(');
            render_scalar(expr, out);
            out.push_str(if *negated { " NOT LIKE " } else { " LIKE " });
            render_scalar(pattern, out);
            out.push(')');
        }
        Scalar::IsNull { expr, negated } => {
            out.push('(');
            render_scalar(expr, out);
            out.push_str(if *negated { " IS NOT NULL)" } else { " IS NULL)" });
        }
        Scalar::Subquery(r) => {
            out.push_str("$(");
            render_rel(r, out);
            out.push(')');
        }
        Scalar::InSubquery { expr, rel, negated } => {
            out.push('(');
            render_scalar(expr, out);
            out.push_str(if *negated { " NOT IN $(" } else { " IN $(" });
            render_rel(rel, out);
            out.push_str("))");
        }
        Scalar::Exists { rel, negated } => {
            out.push_str(if *negated { "NOT EXISTS $(" } else { "EXISTS $(" });
            render_rel(rel, out);
            out.push(')');
        }
    }
}

pub(crate) fn render_agg(a: &AggCall, out: &mut String) {
    out.push_str(a.func.name());
    out.push('(');
    if a.distinct {
        out.push_str("DISTINCT ");
    }
    match &a.arg {
        Some(x) => render_scalar(x, out),
        None => out.push('*'),
    }
    out.push(')');
}

fn render_rel(r: &Rel, out: &mut String) {
    match r {
        Rel::Scan { table, .. } => {
            out.push_str("Scan ");
            out.push_str(table);
        }
        Rel::Values { rows, fields } => {
            out.push_str(&format!("Values {}x{} [", rows.len(), fields.len()));
            for row in rows {
                render_list(row, ", ", out);
                out.push(';');
            }
            out.push(']');
        }
        Rel::Filter { input, predicate } => {
            out.push_str("Filter ");
            render_scalar(predicate, out);
            out.push_str(" {");
            render_rel(input, out);
            out.push('}');
        }
        Rel::Project { input, exprs } => {
            out.push_str("Project [");
            for (i, (e, _)) in exprs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_scalar(e, out);
            }
            out.push_str("] {");
            render_rel(input, out);
            out.push('}');
        }
        Rel::Join { kind, left, right, on } => {
            out.push_str("Join ");
            out.push_str(kind.name());
            if let Some(c) = on {
                out.push(' ');
                render_scalar(c, out);
            }
            out.push_str(" {");
            render_rel(left, out);
            out.push_str("} {");
            render_rel(right, out);
            out.push('}');
        }
        Rel::Aggregate { input, group, aggs } => {
            out.push_str("Aggregate [");
            for (i, (e, _)) in group.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_scalar(e, out);
            }
            out.push_str("] [");
            for (i, (a, _)) in aggs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_agg(a, out);
            }
            out.push_str("] {");
            render_rel(input, out);
            out.push('}');
        }
        Rel::Sort { input, keys } => {
            out.push_str("Sort [");
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_scalar(&k.expr, out);
                out.push_str(if k.desc { " DESC" } else { " ASC" });
            }
            out.push_str("] {");
            render_rel(input, out);
            out.push('}');
        }
        Rel::Limit { input, count, offset } => {
            out.push_str(&format!("Limit {count} {offset} {{"));
            render_rel(input, out);
            out.push('}');
        }
        Rel::SetOp { op, left, right, .. } => {
            out.push_str("SetOp ");
            out.push_str(op.keyword());
            out.push_str(" {");
            render_rel(left, out);
            out.push_str("} {");
            render_rel(right, out);
            out.push('}');
        }
    }
}
