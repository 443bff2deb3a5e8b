//! Syntax tree for the supported SELECT subset.
//!
//! Identifiers are stored lowercased. Structural equality is the derived
//! `PartialEq`; no source positions are kept in the tree.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Ident(pub String);

impl Ident {
    pub fn new(s: impl AsRef<str>) -> Self {
        Ident(s.as_ref().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    pub with: Vec<Cte>,
    pub body: SetExpr,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<Limit>,
}

impl Query {
    pub fn simple(select: Select) -> Self {
        Query { with: Vec::new(), body: SetExpr::Select(Box::new(select)), order_by: Vec::new(), limit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cte {
    pub name: Ident,
    pub query: Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SetOperator {
    Union,
    UnionAll,
    Except,
    Intersect,
}

impl SetOperator {
    pub fn keyword(self) -> &'static str {
        match self {
            SetOperator::Union => "UNION",
            SetOperator::UnionAll => "UNION ALL",
            SetOperator::Except => "EXCEPT",
            SetOperator::Intersect => "INTERSECT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SetExpr {
    Select(Box<Select>),
    SetOp { op: SetOperator, left: Box<SetExpr>, right: Box<SetExpr> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Select {
    pub distinct: bool,
    pub projection: Vec<SelectItem>,
    pub from: Option<FromClause>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(Ident),
    Expr { expr: Expr, alias: Option<Ident> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FromClause {
    pub base: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum JoinKind {
    /// `a, b`
    Comma,
    Inner,
    Left,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Join {
    pub kind: JoinKind,
    pub factor: TableFactor,
    pub on: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TableFactor {
    Table { name: Ident, alias: Option<Ident> },
    Derived { query: Box<Query>, alias: Option<Ident> },
}

impl TableFactor {
    pub fn alias(&self) -> Option<&Ident> {
        match self {
            TableFactor::Table { alias, .. } | TableFactor::Derived { alias, .. } => alias.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderItem {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Limit {
    pub count: Expr,
    pub offset: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Literal {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UnaryOp {
    Neg,
    Plus,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Plus,
    Minus,
    Multiply,
    Divide,
    Modulo,
    Concat,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "OR",
            BinaryOp::And => "AND",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Multiply => "*",
            BinaryOp::Divide => "/",
            BinaryOp::Modulo => "%",
            BinaryOp::Concat => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::NotEq => 4,
            BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq => 5,
            BinaryOp::Plus | BinaryOp::Minus => 6,
            BinaryOp::Multiply | BinaryOp::Divide | BinaryOp::Modulo => 7,
            BinaryOp::Concat => 8,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq)
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinaryOp::Or | BinaryOp::And | BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Plus | BinaryOp::Multiply)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Column {
        table: Option<Ident>,
        name: Ident,
        /// Written in double quotes; SQLite reads such a name as a text
        /// literal when no column matches.
        quoted: bool,
    },
    Literal(Literal),
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinaryOp, left: Box<Expr>, right: Box<Expr> },
    Function { name: Ident, distinct: bool, star: bool, args: Vec<Expr> },
    Case { operand: Option<Box<Expr>>, branches: Vec<(Expr, Expr)>, else_result: Option<Box<Expr>> },
    Subquery(Box<Query>),
    InList { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
    InSubquery { expr: Box<Expr>, query: Box<Query>, negated: bool },
    Exists { query: Box<Query>, negated: bool },
    Between { expr: Box<Expr>, low: Box<Expr>, high: Box<Expr>, negated: bool },
    Like { expr: Box<Expr>, pattern: Box<Expr>, negated: bool },
    IsNull { expr: Box<Expr>, negated: bool },
}

impl Expr {
    pub fn column(name: &str) -> Expr {
        Expr::Column { table: None, name: Ident::new(name), quoted: false }
    }

    pub fn qualified(table: &str, name: &str) -> Expr {
        Expr::Column { table: Some(Ident::new(table)), name: Ident::new(name), quoted: false }
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn int(v: i64) -> Expr {
        Expr::Literal(Literal::Integer(v))
    }
}

/// Walks every expression in a query, including nested subqueries,
/// CTE bodies and derived tables.
pub fn walk_query_exprs<'a>(q: &'a Query, f: &mut dyn FnMut(&'a Expr)) {
    for cte in &q.with {
        walk_query_exprs(&cte.query, f);
    }
    walk_set_exprs(&q.body, f);
    for o in &q.order_by {
        walk_expr(&o.expr, f);
    }
    if let Some(l) = &q.limit {
        walk_expr(&l.count, f);
        if let Some(o) = &l.offset {
            walk_expr(o, f);
        }
    }
}

fn walk_set_exprs<'a>(s: &'a SetExpr, f: &mut dyn FnMut(&'a Expr)) {
    match s {
        SetExpr::Select(sel) => {
            for item in &sel.projection {
                if let SelectItem::Expr { expr, .. } = item {
                    walk_expr(expr, f);
                }
            }
            if let Some(from) = &sel.from {
                walk_factor(&from.base, f);
                for j in &from.joins {
                    walk_factor(&j.factor, f);
                    if let Some(on) = &j.on {
                        walk_expr(on, f);
                    }
                }
            }
            if let Some(w) = &sel.selection {
                walk_expr(w, f);
            }
            for g in &sel.group_by {
                walk_expr(g, f);
            }
            if let Some(h) = &sel.having {
                walk_expr(h, f);
            }
        }
        SetExpr::SetOp { left, right, .. } => {
            walk_set_exprs(left, f);
            walk_set_exprs(right, f);
        }
    }
}

fn walk_factor<'a>(t: &'a TableFactor, f: &mut dyn FnMut(&'a Expr)) {
    if let TableFactor::Derived { query, .. } = t {
        walk_query_exprs(query, f);
    }
}

pub fn walk_expr<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    walk(e, f, true)
}

/// Like `walk_expr` but does not enter subqueries.
pub fn walk_expr_local<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    walk(e, f, false)
}

fn walk<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr), deep: bool) {
    f(e);
    match e {
        Expr::Column { .. } | Expr::Literal(_) => {}
        Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } => walk(expr, f, deep),
        Expr::Binary { left, right, .. } => {
            walk(left, f, deep);
            walk(right, f, deep);
        }
        Expr::Function { args, .. } => args.iter().for_each(|a| walk(a, f, deep)),
        Expr::Case { operand, branches, else_result } => {
            if let Some(o) = operand {
                walk(o, f, deep);
            }
            for (w, t) in branches {
                walk(w, f, deep);
                walk(t, f, deep);
            }
            if let Some(e) = else_result {
                walk(e, f, deep);
            }
        }
        Expr::Subquery(q) | Expr::Exists { query: q, .. } => {
            if deep {
                walk_query_exprs(q, f)
            }
        }
        Expr::InList { expr, list, .. } => {
            walk(expr, f, deep);
            list.iter().for_each(|a| walk(a, f, deep));
        }
        Expr::InSubquery { expr, query, .. } => {
            walk(expr, f, deep);
            if deep {
                walk_query_exprs(query, f);
            }
        }
        Expr::Between { expr, low, high, .. } => {
            walk(expr, f, deep);
            walk(low, f, deep);
            walk(high, f, deep);
        }
        Expr::Like { expr, pattern, .. } => {
            walk(expr, f, deep);
            walk(pattern, f, deep);
        }
    }
}
