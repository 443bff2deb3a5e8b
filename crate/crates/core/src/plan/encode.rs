//! Node descriptors handed to the graph matching network.

use serde::Serialize;

use super::graph::{EdgeKind, RotGraph, NODE_KINDS};
use crate::sql::ast::Literal;

pub const ATTR_BUCKETS: usize = 64;
pub const LITERAL_BUCKETS: usize = 64;
pub const MAX_POSITION_DEPTH: usize = 16;
pub const DEFAULT_POSITION_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteralType {
    Null,
    Number,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDescriptor {
    pub kind_id: usize,
    /// Hash buckets of the attribute tokens.
    pub attr_buckets: Vec<usize>,
    pub literal_type: Option<LiteralType>,
    pub literal_bucket: Option<usize>,
    /// `ln(1 + |v|)` with the sign of `v`, clamped to ±10, numbers only.
    pub log_magnitude: f64,
    pub position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphDescriptor {
    pub nodes: Vec<NodeDescriptor>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn bucket(s: &str, n: usize) -> usize {
    (fnv1a(s.as_bytes()) % n as u64) as usize
}

fn attr_tokens(attr: &str) -> Vec<&str> {
    if attr.is_empty() {
        return Vec::new();
    }
    let mut out = vec![attr];
    let parts: Vec<&str> = attr.split(['.', ' ']).filter(|p| !p.is_empty()).collect();
    if parts.len() > 1 {
        out.extend(parts);
    }
    out
}

/// Sinusoidal code of the root-to-node child-index path.
pub fn position_code(path: &[usize], dim: usize) -> Vec<f64> {
    let path = &path[..path.len().min(MAX_POSITION_DEPTH)];
    let mut out = vec![0.0; dim];
    if path.is_empty() {
        return out;
    }
    let scale = 1.0 / path.len() as f64;
    for j in 0..dim / 2 {
        let w = 1.0 / 10_000f64.powf(2.0 * j as f64 / dim as f64);
        for (depth, &c) in path.iter().enumerate() {
            let angle = (c as f64 + 1.0) * w * std::f64::consts::PI + depth as f64 * 0.5;
            out[2 * j] += angle.sin() * scale;
            out[2 * j + 1] += angle.cos() * scale;
        }
    }
    out
}

pub fn rot_as_graph(g: &RotGraph, position_dim: usize) -> GraphDescriptor {
    let paths = g.paths();
    let nodes = g
        .nodes
        .iter()
        .zip(&paths)
        .map(|(n, path)| {
            let kind_id = NODE_KINDS.iter().position(|k| *k == n.kind).expect("known node kind");
            let (literal_type, literal_bucket, log_magnitude) = match &n.literal {
                None => (None, None, 0.0),
                Some(Literal::Null) => (Some(LiteralType::Null), None, 0.0),
                Some(l @ (Literal::Integer(_) | Literal::Real(_))) => {
                    let v = match l {
                        Literal::Integer(i) => *i as f64,
                        Literal::Real(r) => *r,
                        _ => unreachable!(),
                    };
                    let mag = (v.signum() * v.abs().ln_1p()).clamp(-10.0, 10.0);
                    (Some(LiteralType::Number), Some(bucket(&n.attr, LITERAL_BUCKETS)), if mag.is_finite() { mag } else { 0.0 })
                }
                Some(Literal::Text(_)) => (Some(LiteralType::Text), Some(bucket(&n.attr, LITERAL_BUCKETS)), 0.0),
            };
            let attr_buckets =
                if n.literal.is_some() { Vec::new() } else { attr_tokens(&n.attr).into_iter().map(|t| bucket(t, ATTR_BUCKETS)).collect() };
            NodeDescriptor { kind_id, attr_buckets, literal_type, literal_bucket, log_magnitude, position: position_code(path, position_dim) }
        })
        .collect();
    GraphDescriptor { nodes, edges: g.edges.clone() }
}
