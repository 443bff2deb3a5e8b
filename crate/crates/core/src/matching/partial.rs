//! Hierarchical partial matching between a generated and a reference tree.
//!
//! Every generated node is scored against every reference node with the
//! recursive score `m = alpha * m_self + (1 - alpha) * mean(child scores)` and
//! takes the best-scoring candidate. Precision and recall count matched nodes
//! on each side; the final score is their F-beta combination.

use std::collections::BTreeSet;

use serde::Serialize;

use super::tree::LabeledTree;

pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    /// Best reference candidate for every generated node, with its score.
    pub pairs: Vec<(usize, usize, f64)>,
    pub matched_generated: Vec<usize>,
    pub matched_reference: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// `(1 + b^2) P R / (b^2 P + R)`, zero when both are zero.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Memoized recursive node scores between two trees.
pub struct NodeScorer<'a> {
    gen: &'a LabeledTree,
    reference: &'a LabeledTree,
    alpha: f64,
    memo: Vec<f64>,
}

impl<'a> NodeScorer<'a> {
    pub fn new(gen: &'a LabeledTree, reference: &'a LabeledTree, alpha: f64) -> Self {
        NodeScorer { gen, reference, alpha, memo: vec![f64::NAN; gen.len() * reference.len()] }
    }

    fn self_score(&self, g: usize, r: usize) -> f64 {
        if self.gen.label(g) == self.reference.label(r) {
            1.0
        } else {
            0.0
        }
    }

    /// Recursive score of generated node `g` against reference node `r`.
    pub fn score(&mut self, g: usize, r: usize) -> f64 {
        let idx = g * self.reference.len() + r;
        let cached = self.memo[idx];
        if !cached.is_nan() {
            return cached;
        }
        let m_self = self.self_score(g, r);
        let ng = self.gen.children(g).len();
        let nr = self.reference.children(r).len();
        let value = if ng == 0 && nr == 0 {
            m_self
        } else {
            let total: f64 = self.pairing(g, r).iter().map(|&(_, _, s)| s).sum();
            self.alpha * m_self + (1.0 - self.alpha) * total / ng.max(nr) as f64
        };
        self.memo[idx] = value;
        value
    }

    /// Child correspondence used by `score(g, r)`: positional when either
    /// node orders its children, greedy by descending score otherwise.
    pub fn pairing(&mut self, g: usize, r: usize) -> Vec<(usize, usize, f64)> {
        let gc: Vec<usize> = self.gen.children(g).to_vec();
        let rc: Vec<usize> = self.reference.children(r).to_vec();
        if self.gen.is_ordered(g) || self.reference.is_ordered(r) {
            return gc.iter().zip(&rc).map(|(&a, &b)| (a, b, self.score(a, b))).collect();
        }
        let mut cands = Vec::with_capacity(gc.len() * rc.len());
        for &a in &gc {
            for &b in &rc {
                cands.push((a, b, self.score(a, b)));
            }
        }
        cands.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.1.cmp(&y.1)).then(x.0.cmp(&y.0)));
        let mut used_g = BTreeSet::new();
        let mut used_r = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b, s) in cands {
            if !used_g.contains(&a) && !used_r.contains(&b) {
                used_g.insert(a);
                used_r.insert(b);
                out.push((a, b, s));
            }
        }
        out.sort_by_key(|p| p.0);
        out
    }

    /// Best reference candidate for `g`; ties go to the smallest preorder id.
    pub fn best_candidate(&mut self, g: usize) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for r in 0..self.reference.len() {
            let s = self.score(g, r);
            if s > best.1 {
                best = (r, s);
            }
        }
        best
    }
}

/// Recursive score of a single node pair.
pub fn node_score(gen: &LabeledTree, g: usize, reference: &LabeledTree, r: usize, alpha: f64) -> f64 {
    NodeScorer::new(gen, reference, alpha).score(g, r)
}

pub fn partial_match(gen: &LabeledTree, reference: &LabeledTree, alpha: f64, beta: f64) -> MatchReport {
    let mut scorer = NodeScorer::new(gen, reference, alpha);
    let mut pairs = Vec::with_capacity(gen.len());
    let mut matched_generated = Vec::new();
    let mut matched_reference = BTreeSet::new();
    for g in 0..gen.len() {
        let (r, s) = scorer.best_candidate(g);
        pairs.push((g, r, s));
        if gen.label(g) == reference.label(r) {
            matched_generated.push(g);
            collect_matched(&mut scorer, g, r, &mut matched_reference);
        }
    }
    let precision = matched_generated.len() as f64 / gen.len() as f64;
    let recall = matched_reference.len() as f64 / reference.len() as f64;
    MatchReport {
        pairs,
        matched_generated,
        matched_reference: matched_reference.into_iter().collect(),
        precision,
        recall,
        f_beta: f_beta(precision, recall, beta),
        alpha,
        beta,
    }
}

/// Adds `r` and every reference descendant reached through equal-label
/// pairs of the winning recursive pairing.
fn collect_matched(scorer: &mut NodeScorer<'_>, g: usize, r: usize, out: &mut BTreeSet<usize>) {
    out.insert(r);
    for (a, b, _) in scorer.pairing(g, r) {
        if scorer.gen.label(a) == scorer.reference.label(b) {
            collect_matched(scorer, a, b, out);
        }
    }
}
