//! Syntax tree → labeled tree, the substrate for AST partial matching.

use super::ast::*;
use super::print::format_real;
use crate::matching::{Label, LabeledTree, TreeNode};

pub fn ast_as_tree(q: &Query) -> LabeledTree {
    LabeledTree::from_nested(&query_node(q))
}

fn node(kind: &str, attr: impl Into<String>, ordered: bool, children: Vec<TreeNode>) -> TreeNode {
    TreeNode::new(Label::new(kind, attr), ordered, children)
}

fn query_node(q: &Query) -> TreeNode {
    let mut root = set_node(&q.body);
    if !q.with.is_empty() {
        let ctes = q
            .with
            .iter()
            .map(|c| node("cte-def", c.name.as_str(), true, vec![query_node(&c.query)]))
            .collect();
        root.children.insert(0, node("with-clause", "", true, ctes));
    }
    if !q.order_by.is_empty() {
        let items = q
            .order_by
            .iter()
            .map(|o| node("order-item", if o.desc { "DESC" } else { "ASC" }, true, vec![expr_node(&o.expr)]))
            .collect();
        root.children.push(node("order-by", "", true, items));
    }
    if let Some(l) = &q.limit {
        let mut kids = vec![expr_node(&l.count)];
        if let Some(o) = &l.offset {
            kids.push(expr_node(o));
        }
        root.children.push(node("limit-clause", "", true, kids));
    }
    root
}

fn set_node(s: &SetExpr) -> TreeNode {
    match s {
        SetExpr::Select(sel) => select_node(sel),
        SetExpr::SetOp { op, left, right } => {
            let commutative = !matches!(op, SetOperator::Except);
            node("set-op", op.keyword(), !commutative, vec![set_node(left), set_node(right)])
        }
    }
}

fn select_node(s: &Select) -> TreeNode {
    let mut kids = Vec::new();
    let items = s
        .projection
        .iter()
        .map(|item| match item {
            SelectItem::Wildcard => node("expr-star", "*", true, vec![]),
            SelectItem::QualifiedWildcard(q) => node("expr-star", format!("{}.*", q.as_str()), true, vec![]),
            SelectItem::Expr { expr, .. } => expr_node(expr),
        })
        .collect();
    kids.push(node("projection", "", true, items));
    if let Some(from) = &s.from {
        let mut acc = factor_node(&from.base);
        for j in &from.joins {
            let kind = match j.kind {
                JoinKind::Comma | JoinKind::Cross => "CROSS",
                JoinKind::Inner => "INNER",
                JoinKind::Left => "LEFT",
            };
            let mut jk = vec![acc, factor_node(&j.factor)];
            if let Some(on) = &j.on {
                jk.push(expr_node(on));
            }
            acc = node("join", kind, true, jk);
        }
        kids.push(node("from", "", true, vec![acc]));
    }
    if let Some(w) = &s.selection {
        kids.push(node("where", "", true, vec![expr_node(w)]));
    }
    if !s.group_by.is_empty() {
        kids.push(node("group-clause", "", true, s.group_by.iter().map(expr_node).collect()));
    }
    if let Some(h) = &s.having {
        kids.push(node("having", "", true, vec![expr_node(h)]));
    }
    node("select-core", if s.distinct { "DISTINCT" } else { "" }, true, kids)
}

fn factor_node(t: &TableFactor) -> TreeNode {
    match t {
        TableFactor::Table { name, .. } => node("table-ref", name.as_str(), true, vec![]),
        TableFactor::Derived { query, .. } => node("expr-subquery", "FROM", true, vec![query_node(query)]),
    }
}

pub(crate) fn literal_attr(l: &Literal) -> String {
    match l {
        Literal::Null => "NULL".into(),
        Literal::Integer(v) => v.to_string(),
        Literal::Real(v) => format_real(*v),
        Literal::Text(s) => format!("'{s}'"),
    }
}

fn expr_node(e: &Expr) -> TreeNode {
    match e {
        Expr::Column { table, name, .. } => {
            let attr = match table {
                Some(t) => format!("{}.{}", t.as_str(), name.as_str()),
                None => name.as_str().to_string(),
            };
            node("expr-column", attr, true, vec![])
        }
        Expr::Literal(l) => node("expr-literal", literal_attr(l), true, vec![]),
        Expr::Unary { op, expr } => {
            let sym = match op {
                UnaryOp::Neg => "-",
                UnaryOp::Plus => "+",
                UnaryOp::Not => "NOT",
            };
            node("expr-unary", sym, true, vec![expr_node(expr)])
        }
        Expr::Binary { op, left, right } => {
            node("expr-binary", op.symbol(), !op.is_commutative(), vec![expr_node(left), expr_node(right)])
        }
        Expr::Function { name, distinct, star, args } => {
            let mut attr = name.as_str().to_uppercase();
            if *distinct {
                attr.push_str(" DISTINCT");
            }
            let mut kids: Vec<TreeNode> = args.iter().map(expr_node).collect();
            if *star {
                kids.push(node("expr-star", "*", true, vec![]));
            }
            node("expr-function", attr, true, kids)
        }
        Expr::Case { operand, branches, else_result } => {
            let mut kids = Vec::new();
            if let Some(o) = operand {
                kids.push(expr_node(o));
            }
            for (w, t) in branches {
                kids.push(node("when", "", true, vec![expr_node(w), expr_node(t)]));
            }
            if let Some(e) = else_result {
                kids.push(node("else", "", true, vec![expr_node(e)]));
            }
            node("expr-case", "", true, kids)
        }
        Expr::Subquery(q) => node("expr-subquery", "SCALAR", true, vec![query_node(q)]),
        Expr::InList { expr, list, negated } => {
            let mut kids = vec![expr_node(expr)];
            kids.push(node("list", "", false, list.iter().map(expr_node).collect()));
            node("expr-in", if *negated { "NOT IN" } else { "IN" }, true, kids)
        }
        Expr::InSubquery { expr, query, negated } => node(
            "expr-in",
            if *negated { "NOT IN" } else { "IN" },
            true,
            vec![expr_node(expr), node("expr-subquery", "IN", true, vec![query_node(query)])],
        ),
        Expr::Exists { query, negated } => node(
            "expr-exists",
            if *negated { "NOT EXISTS" } else { "EXISTS" },
            true,
            vec![node("expr-subquery", "EXISTS", true, vec![query_node(query)])],
        ),
        Expr::Between { expr, low, high, negated } => node(
            "expr-between",
            if *negated { "NOT BETWEEN" } else { "BETWEEN" },
            true,
            vec![expr_node(expr), expr_node(low), expr_node(high)],
        ),
        Expr::Like { expr, pattern, negated } => node(
            "expr-like",
            if *negated { "NOT LIKE" } else { "LIKE" },
            true,
            vec![expr_node(expr), expr_node(pattern)],
        ),
        Expr::IsNull { expr, negated } => {
            node("expr-is-null", if *negated { "IS NOT NULL" } else { "IS NULL" }, true, vec![expr_node(expr)])
        }
    }
}
