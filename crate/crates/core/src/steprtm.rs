//! Stepwise coverage rewards for CTE-structured queries.
//!
//! A generated `WITH` query is cut into its CTE bodies and the final SELECT.
//! Each prefix is planned on its own and matched against the reference plan;
//! a step earns the fraction of reference nodes it covers for the first time.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::matching::{partial_match, rot_graph, ScoreError, Side};
use crate::plan::{normalize, lower, rot_as_tree, Catalog, RotError, RotGraph};
use crate::sql::{parse, tokenize, ParseError, TokenKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    /// CTE name, or `None` for the final SELECT.
    pub name: Option<String>,
    /// Byte span of the body: inside the parentheses for a CTE.
    pub span: (usize, usize),
    /// Index of the token closing the segment.
    pub end_token: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segmentation {
    pub source: String,
    pub segments: Vec<Segment>,
}

impl Segmentation {
    pub fn body(&self, i: usize) -> &str {
        let (a, b) = self.segments[i].span;
        &self.source[a..b]
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

pub fn segment_cte(gen_sql: &str) -> Result<Segmentation, ParseError> {
    parse(gen_sql)?;
    let toks = tokenize(gen_sql)?;
    let mut segments = Vec::new();
    let mut i = 0;
    if toks.first().is_some_and(|t| t.is_keyword("WITH")) {
        i = 1;
        loop {
            // name AS ( body )
            let name = toks[i].lexeme.trim_matches(|c| matches!(c, '"' | '`' | '[' | ']')).to_lowercase();
            let open = i + 2;
            let mut depth = 0usize;
            let mut close = open;
            for (j, t) in toks.iter().enumerate().skip(open) {
                if t.kind == TokenKind::Punctuation && t.lexeme == "(" {
                    depth += 1;
                } else if t.kind == TokenKind::Punctuation && t.lexeme == ")" {
                    depth -= 1;
                    if depth == 0 {
                        close = j;
                        break;
                    }
                }
            }
            segments.push(Segment {
                name: Some(name),
                span: (toks[open].span.1, toks[close].span.0),
                end_token: close,
            });
            i = close + 1;
            if toks[i].kind == TokenKind::Punctuation && toks[i].lexeme == "," {
                i += 1;
            } else {
                break;
            }
        }
    }
    let last = toks.len() - 1;
    let end_token = if toks[last].lexeme == ";" && last > i { last - 1 } else { last };
    segments.push(Segment { name: None, span: (toks[i].span.0, toks[end_token].span.1), end_token });
    Ok(Segmentation { source: gen_sql.to_string(), segments })
}

/// Earlier CTEs that step `i` reads, directly or through other CTEs.
fn dependencies(seg: &Segmentation, i: usize) -> Vec<usize> {
    let idents = |j: usize| -> BTreeSet<String> {
        tokenize(seg.body(j))
            .map(|ts| ts.into_iter().filter(|t| t.kind == TokenKind::Identifier).map(|t| t.lexeme.to_lowercase()).collect())
            .unwrap_or_default()
    };
    let mut need = BTreeSet::from([i]);
    for j in (0..=i).rev() {
        if !need.contains(&j) {
            continue;
        }
        let used = idents(j);
        for k in 0..j {
            if seg.segments[k].name.as_ref().is_some_and(|n| used.contains(n)) {
                need.insert(k);
            }
        }
    }
    need.into_iter().collect()
}

/// Query text that makes step `i` executable on its own: the CTEs it
/// depends on, then a star projection of its own result.
pub fn step_query(seg: &Segmentation, i: usize) -> String {
    let n = seg.segments.len();
    if i + 1 == n {
        return seg.source.clone();
    }
    let defs: Vec<String> = dependencies(seg, i)
        .into_iter()
        .map(|j| format!("{} AS ({})", seg.segments[j].name.as_deref().unwrap_or_default(), seg.body(j)))
        .collect();
    format!("WITH {} SELECT * FROM {}", defs.join(", "), seg.segments[i].name.as_deref().unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error(transparent)]
    Rot(#[from] RotError),
}

pub fn step_rot(seg: &Segmentation, i: usize, catalog: &Catalog) -> Result<RotGraph, StepError> {
    let q = parse(&step_query(seg, i))?;
    Ok(RotGraph::from_rel(&normalize(&lower(&q, catalog)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub segment: usize,
    pub covered: usize,
    pub coverage: f64,
    pub increment: f64,
    pub end_token: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub steps: Vec<Step>,
    pub reference_nodes: usize,
}

impl StepTrace {
    pub fn total(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.coverage)
    }
}

pub fn step_rewards(gen_sql: &str, ref_sql: &str, catalog: &Catalog, alpha: f64) -> Result<StepTrace, ScoreError> {
    let reference = rot_as_tree(&rot_graph(ref_sql, catalog, Side::Reference)?);
    let seg = segment_cte(gen_sql).map_err(|e| ScoreError {
        side: Side::Generated,
        class: crate::matching::FailureClass::Syntax,
        message: e.to_string(),
    })?;
    let total = reference.len();
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    let mut prev = 0.0;
    let mut steps = Vec::with_capacity(seg.len());
    for i in 0..seg.len() {
        let mut error = None;
        match step_rot(&seg, i, catalog) {
            Ok(g) => {
                // beta does not affect the matched sets
                let m = partial_match(&rot_as_tree(&g), &reference, alpha, 1.0);
                covered.extend(m.matched_reference);
            }
            Err(e) => error = Some(e.to_string()),
        }
        let coverage = covered.len() as f64 / total as f64;
        steps.push(Step {
            segment: i,
            covered: covered.len(),
            coverage,
            increment: coverage - prev,
            end_token: seg.segments[i].end_token,
            error,
        });
        prev = coverage;
    }
    Ok(StepTrace { steps, reference_nodes: total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_shape_segments() {
        let s = segment_cte("WITH step1 AS (SELECT 1 AS a), step2 AS (SELECT a FROM step1) SELECT a FROM step2").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.segments[0].name.as_deref(), Some("step1"));
        assert_eq!(s.body(0), "SELECT 1 AS a");
        assert_eq!(s.body(2), "SELECT a FROM step2");
        assert!(s.segments[0].end_token < s.segments[1].end_token);
    }

    #[test]
    fn plain_query_is_one_segment() {
        let s = segment_cte("SELECT 1").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.segments[0].end_token, 1);
        assert_eq!(s.body(0), "SELECT 1");
    }

    #[test]
    fn syntax_error_propagates() {
        assert!(segment_cte("WITH a AS (SELECT) SELECT 1").is_err());
    }
}
