use std::fmt;

use serde::Serialize;

/// Node label: operator or syntax kind plus a normalized attribute string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Label {
    pub kind: String,
    pub attr: String,
}

impl Label {
    pub fn new(kind: impl Into<String>, attr: impl Into<String>) -> Self {
        Label { kind: kind.into(), attr: attr.into() }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.attr.is_empty() {
            f.write_str(&self.kind)
        } else {
            write!(f, "{}[{}]", self.kind, self.attr)
        }
    }
}

/// Nested form used to build a [`LabeledTree`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub label: Label,
    /// Children are compared positionally when true, as a multiset otherwise.
    pub ordered: bool,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(label: Label) -> Self {
        TreeNode { label, ordered: true, children: Vec::new() }
    }

    pub fn new(label: Label, ordered: bool, children: Vec<TreeNode>) -> Self {
        TreeNode { label, ordered, children }
    }
}

/// Rooted ordered tree with node ids assigned in preorder; the root is id 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledTree {
    labels: Vec<Label>,
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    ordered: Vec<bool>,
}

impl LabeledTree {
    pub fn from_nested(root: &TreeNode) -> Self {
        let mut t = LabeledTree { labels: Vec::new(), children: Vec::new(), parent: Vec::new(), ordered: Vec::new() };
        t.push(root, None);
        t
    }

    fn push(&mut self, node: &TreeNode, parent: Option<usize>) -> usize {
        let id = self.labels.len();
        self.labels.push(node.label.clone());
        self.children.push(Vec::new());
        self.parent.push(parent);
        self.ordered.push(node.ordered);
        for c in &node.children {
            let cid = self.push(c, Some(id));
            self.children[id].push(cid);
        }
        id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn label(&self, id: usize) -> &Label {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent[id]
    }

    pub fn is_ordered(&self, id: usize) -> bool {
        self.ordered[id]
    }

    /// Rebuilds the nested form of the subtree at `id`.
    pub fn subtree(&self, id: usize) -> TreeNode {
        TreeNode {
            label: self.labels[id].clone(),
            ordered: self.ordered[id],
            children: self.children[id].iter().map(|&c| self.subtree(c)).collect(),
        }
    }

    /// Indented one-node-per-line rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, 0, &mut out);
        out
    }

    fn render_into(&self, id: usize, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        out.push_str(&self.labels[id].to_string());
        out.push('\n');
        for &c in &self.children[id] {
            self.render_into(c, depth + 1, out);
        }
    }
}
