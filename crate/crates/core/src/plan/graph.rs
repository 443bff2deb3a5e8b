//! Graph export of operator trees.
//!
//! Operators and expressions both become nodes. Child edges follow the tree;
//! data-flow edges run from the operator that produces a field to every
//! column expression reading it.

use std::collections::HashMap;

use serde::Serialize;

use super::rel::*;
use crate::matching::{Label, LabeledTree, TreeNode};
use crate::sql::ast::{BinaryOp, Literal, SetOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Child,
    DataFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotNode {
    pub kind: &'static str,
    pub attr: String,
    /// Children compare positionally when true.
    pub ordered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub literal: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotGraph {
    pub nodes: Vec<RotNode>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
    pub root: usize,
}

pub const NODE_KINDS: &[&str] = &[
    "TableScan", "Values", "Filter", "Project", "Join", "Aggregate", "AggCall", "Sort", "SortKey", "Limit", "SetOp",
    "Column", "Literal", "Neg", "Not", "Compare", "Arith", "And", "Or", "Func", "Case", "When", "Else", "InList",
    "List", "Between", "Like", "IsNull", "Subquery", "InSubquery", "Exists",
];

impl RotGraph {
    pub fn from_rel(rel: &Rel) -> RotGraph {
        let mut b = Builder { nodes: Vec::new(), edges: Vec::new(), producers: HashMap::new(), reads: Vec::new() };
        b.rel(rel);
        let mut edges = b.edges;
        for (node, id) in b.reads {
            if let Some(&p) = b.producers.get(&id) {
                edges.push((p, node, EdgeKind::DataFlow));
            }
        }
        RotGraph { nodes: b.nodes, edges, root: 0 }
    }

    pub fn children(&self, id: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == id && e.2 == EdgeKind::Child).map(|e| e.1).collect()
    }

    pub fn label(&self, id: usize) -> Label {
        Label::new(self.nodes[id].kind, self.nodes[id].attr.clone())
    }

    /// Preorder path of child positions from the root to every node.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            for (i, c) in self.children(n).into_iter().enumerate() {
                let mut p = out[n].clone();
                p.push(i);
                out[c] = p;
                stack.push(c);
            }
        }
        out
    }

    /// Indented dump, one node per line.
    pub fn render(&self) -> String {
        rot_as_tree(self).render()
    }
}

struct Builder {
    nodes: Vec<RotNode>,
    edges: Vec<(usize, usize, EdgeKind)>,
    producers: HashMap<FieldId, usize>,
    reads: Vec<(usize, FieldId)>,
}

fn literal_attr(l: &Literal) -> String {
    match l {
        Literal::Null => "null".into(),
        Literal::Integer(_) | Literal::Real(_) => format!("number:{}", literal_text(l)),
        Literal::Text(s) => format!("text:{s}"),
    }
}

impl Builder {
    fn node(&mut self, parent: Option<usize>, kind: &'static str, attr: impl Into<String>, ordered: bool) -> usize {
        let id = self.nodes.len();
        self.nodes.push(RotNode { kind, attr: attr.into(), ordered, literal: None });
        if let Some(p) = parent {
            self.edges.push((p, id, EdgeKind::Child));
        }
        id
    }

    fn produce(&mut self, node: usize, fields: &[Field]) {
        for f in fields {
            self.producers.entry(f.id).or_insert(node);
        }
    }

    fn rel(&mut self, rel: &Rel) -> usize {
        self.rel_under(None, rel)
    }

    fn rel_under(&mut self, parent: Option<usize>, rel: &Rel) -> usize {
        match rel {
            Rel::Scan { table, fields } => {
                let n = self.node(parent, "TableScan", table.clone(), true);
                self.produce(n, fields);
                n
            }
            Rel::Values { rows, fields } => {
                let n = self.node(parent, "Values", format!("{}x{}", rows.len(), fields.len()), true);
                for e in rows.iter().flatten() {
                    self.scalar(n, e);
                }
                self.produce(n, fields);
                n
            }
            Rel::Filter { input, predicate } => {
                let n = self.node(parent, "Filter", "", true);
                self.rel_under(Some(n), input);
                self.scalar(n, predicate);
                n
            }
            Rel::Project { input, exprs } => {
                let n = self.node(parent, "Project", "", true);
                self.rel_under(Some(n), input);
                for (e, _) in exprs {
                    self.scalar(n, e);
                }
                let defs: Vec<Field> = exprs.iter().map(|(_, f)| f.clone()).collect();
                self.produce(n, &defs);
                n
            }
            Rel::Join { kind, left, right, on } => {
                let n = self.node(parent, "Join", kind.name(), *kind == JoinType::Left);
                self.rel_under(Some(n), left);
                self.rel_under(Some(n), right);
                if let Some(c) = on {
                    self.scalar(n, c);
                }
                n
            }
            Rel::Aggregate { input, group, aggs } => {
                let n = self.node(parent, "Aggregate", if aggs.is_empty() && !group.is_empty() { "distinct" } else { "" }, false);
                self.rel_under(Some(n), input);
                for (e, _) in group {
                    self.scalar(n, e);
                }
                for (a, _) in aggs {
                    let attr = match (a.func, a.distinct) {
                        (AggFunc::CountStar, _) => "COUNT(*)".to_string(),
                        (f, true) => format!("{} DISTINCT", f.name()),
                        (f, false) => f.name().to_string(),
                    };
                    let c = self.node(Some(n), "AggCall", attr, true);
                    if let Some(arg) = &a.arg {
                        self.scalar(c, arg);
                    }
                }
                // pass-through keys keep their original producer
                let defs: Vec<Field> = group.iter().map(|(_, f)| f.clone()).chain(aggs.iter().map(|(_, f)| f.clone())).collect();
                self.produce(n, &defs);
                n
            }
            Rel::Sort { input, keys } => {
                let n = self.node(parent, "Sort", "", true);
                self.rel_under(Some(n), input);
                for k in keys {
                    let s = self.node(Some(n), "SortKey", if k.desc { "DESC" } else { "ASC" }, true);
                    self.scalar(s, &k.expr);
                }
                n
            }
            Rel::Limit { input, count, offset } => {
                let attr = if *offset == 0 { count.to_string() } else { format!("{count} offset {offset}") };
                let n = self.node(parent, "Limit", attr, true);
                self.rel_under(Some(n), input);
                n
            }
            Rel::SetOp { op, left, right, fields } => {
                let n = self.node(parent, "SetOp", op.keyword().to_lowercase(), *op == SetOperator::Except);
                self.rel_under(Some(n), left);
                self.rel_under(Some(n), right);
                self.produce(n, fields);
                n
            }
        }
    }

    fn scalar(&mut self, parent: usize, e: &Scalar) -> usize {
        match e {
            Scalar::Column { id, label } => {
                let n = self.node(Some(parent), "Column", label.clone(), true);
                self.reads.push((n, *id));
                n
            }
            Scalar::Literal(l) => {
                let n = self.node(Some(parent), "Literal", literal_attr(l), true);
                self.nodes[n].literal = Some(l.clone());
                n
            }
            Scalar::Unary { op, arg } => {
                let kind = match op {
                    UnaryFn::Neg => "Neg",
                    UnaryFn::Not => "Not",
                };
                let n = self.node(Some(parent), kind, "", true);
                self.scalar(n, arg);
                n
            }
            Scalar::Binary { op, left, right } => {
                let (kind, ordered) = if op.is_comparison() {
                    ("Compare", !matches!(op, BinaryOp::Eq | BinaryOp::NotEq))
                } else {
                    ("Arith", !matches!(op, BinaryOp::Plus | BinaryOp::Multiply))
                };
                let n = self.node(Some(parent), kind, op.symbol(), ordered);
                self.scalar(n, left);
                self.scalar(n, right);
                n
            }
            Scalar::And(v) | Scalar::Or(v) => {
                let kind = if matches!(e, Scalar::And(_)) { "And" } else { "Or" };
                let n = self.node(Some(parent), kind, "", false);
                for x in v {
                    self.scalar(n, x);
                }
                n
            }
            Scalar::Func { func, args } => {
                let n = self.node(Some(parent), "Func", func.name(), true);
                for a in args {
                    self.scalar(n, a);
                }
                n
            }
            Scalar::Case { operand, branches, else_result } => {
                let n = self.node(Some(parent), "Case", if operand.is_some() { "simple" } else { "searched" }, true);
                if let Some(o) = operand {
                    self.scalar(n, o);
                }
                for (w, t) in branches {
                    let b = self.node(Some(n), "When", "", true);
                    self.scalar(b, w);
                    self.scalar(b, t);
                }
                if let Some(x) = else_result {
                    let b = self.node(Some(n), "Else", "", true);
                    self.scalar(b, x);
                }
                n
            }
            Scalar::InList { expr, list, negated } => {
                let n = self.node(Some(parent), "InList", if *negated { "NOT IN" } else { "IN" }, true);
                self.scalar(n, expr);
                let l = self.node(Some(n), "List", "", false);
                for x in list {
                    self.scalar(l, x);
                }
                n
            }
            Scalar::Between { expr, low, high, negated } => {
                let n = self.node(Some(parent), "Between", if *negated { "NOT BETWEEN" } else { "BETWEEN" }, true);
                self.scalar(n, expr);
                self.scalar(n, low);
                self.scalar(n, high);
                n
            }
            Scalar::Like { expr, pattern, negated } => {
                let n = self.node(Some(parent), "Like", if *negated { "NOT LIKE" } else { "LIKE" }, true);
                self.scalar(n, expr);
                self.scalar(n, pattern);
                n
            }
            Scalar::IsNull { expr, negated } => {
                let n = self.node(Some(parent), "IsNull", if *negated { "IS NOT NULL" } else { "IS NULL" }, true);
                self.scalar(n, expr);
                n
            }
            Scalar::Subquery(r) => {
                let n = self.node(Some(parent), "Subquery", "scalar", true);
                self.rel_under(Some(n), r);
                n
            }
            Scalar::InSubquery { expr, rel, negated } => {
                let n = self.node(Some(parent), "InSubquery", if *negated { "anti" } else { "semi" }, true);
                self.scalar(n, expr);
                self.rel_under(Some(n), rel);
                n
            }
            Scalar::Exists { rel, negated } => {
                let n = self.node(Some(parent), "Exists", if *negated { "anti" } else { "semi" }, true);
                self.rel_under(Some(n), rel);
                n
            }
        }
    }
}

/// Child-edge tree with `(kind, attr)` labels, the RelPM substrate.
pub fn rot_as_tree(g: &RotGraph) -> LabeledTree {
    fn build(g: &RotGraph, kids: &[Vec<usize>], n: usize) -> TreeNode {
        TreeNode::new(g.label(n), g.nodes[n].ordered, kids[n].iter().map(|&c| build(g, kids, c)).collect())
    }
    let mut kids = vec![Vec::new(); g.nodes.len()];
    for &(s, d, k) in &g.edges {
        if k == EdgeKind::Child {
            kids[s].push(d);
        }
    }
    LabeledTree::from_nested(&build(g, &kids, g.root))
}
