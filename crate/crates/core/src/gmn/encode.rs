use ndarray::Array2;
use serde::Serialize;

use crate::plan::{
    rot_as_graph, EdgeKind, GraphDescriptor, LiteralType, RotGraph, ATTR_BUCKETS, LITERAL_BUCKETS, NODE_KINDS,
};

/// kind one-hot, attribute multi-hot, literal type, literal bucket, log magnitude
pub const INPUT_DIM: usize = NODE_KINDS.len() + ATTR_BUCKETS + 3 + LITERAL_BUCKETS + 1;

/// Child and data-flow edges, each in both directions.
pub const EDGE_TYPES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodedGraph {
    pub features: Array2<f64>,
    pub positions: Array2<f64>,
    /// `(source, destination, type)` with messages flowing source to destination.
    pub edges: Vec<(usize, usize, usize)>,
}

impl EncodedGraph {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Same graph with node `i` moved to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> EncodedGraph {
        let mut features = Array2::zeros(self.features.dim());
        let mut positions = Array2::zeros(self.positions.dim());
        for (i, &p) in perm.iter().enumerate() {
            features.row_mut(p).assign(&self.features.row(i));
            positions.row_mut(p).assign(&self.positions.row(i));
        }
        let edges = self.edges.iter().map(|&(s, d, t)| (perm[s], perm[d], t)).collect();
        EncodedGraph { features, positions, edges }
    }
}

pub fn encode_graph(desc: &GraphDescriptor) -> EncodedGraph {
    let n = desc.nodes.len();
    let pos_dim = desc.nodes.first().map_or(0, |d| d.position.len());
    let mut features = Array2::zeros((n, INPUT_DIM));
    let mut positions = Array2::zeros((n, pos_dim));
    let attr0 = NODE_KINDS.len();
    let lit0 = attr0 + ATTR_BUCKETS;
    let bucket0 = lit0 + 3;
    for (i, d) in desc.nodes.iter().enumerate() {
        features[[i, d.kind_id]] = 1.0;
        for &b in &d.attr_buckets {
            features[[i, attr0 + b]] = 1.0;
        }
        if let Some(t) = d.literal_type {
            let k = match t {
                LiteralType::Null => 0,
                LiteralType::Number => 1,
                LiteralType::Text => 2,
            };
            features[[i, lit0 + k]] = 1.0;
        }
        if let Some(b) = d.literal_bucket {
            features[[i, bucket0 + b]] = 1.0;
        }
        features[[i, INPUT_DIM - 1]] = d.log_magnitude / 10.0;
        for (j, &p) in d.position.iter().enumerate() {
            positions[[i, j]] = p;
        }
    }
    let mut edges = Vec::with_capacity(desc.edges.len() * 2);
    for &(s, d, k) in &desc.edges {
        let base = match k {
            EdgeKind::Child => 0,
            EdgeKind::DataFlow => 2,
        };
        edges.push((s, d, base));
        edges.push((d, s, base + 1));
    }
    EncodedGraph { features, positions, edges }
}

pub fn encode_rot(g: &RotGraph, position_dim: usize) -> EncodedGraph {
    encode_graph(&rot_as_graph(g, position_dim))
}
