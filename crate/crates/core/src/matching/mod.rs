//! Labeled trees and hierarchical partial matching.

mod partial;
mod scorers;
mod tree;

pub use partial::{f_beta, node_score, partial_match, MatchReport, NodeScorer, DEFAULT_ALPHA, DEFAULT_BETA};
pub use scorers::{astpm, astpm_report, relpm, relpm_report, rot_graph, FailureClass, ScoreError, Side};
pub use tree::{Label, LabeledTree, TreeNode};
