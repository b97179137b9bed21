//! Exhaustive walk enumeration, used as the reference for the extraction
//! algorithms on small graphs.

use crate::error::{Error, Result};
use crate::kg::{Edge, EntityId, MergedGraph};
use serde::{Deserialize, Serialize};

/// Maximum number of walk prefixes the oracle will expand.
pub const ORACLE_BUDGET: usize = 1_000_000;

/// A directed walk from a source entity to a target entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub edges: Vec<Edge>,
    /// Positions (0-based) of anchor edges along the walk.
    pub anchor_positions: Vec<usize>,
}

impl AlignmentPath {
    pub fn new(graph: &MergedGraph, edges: Vec<Edge>) -> Self {
        let anchor_positions = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| graph.is_anchor_relation(e.rel))
            .map(|(i, _)| i)
            .collect();
        Self {
            edges,
            anchor_positions,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn source(&self) -> Option<u32> {
        self.edges.first().map(|e| e.head)
    }

    pub fn target(&self) -> Option<u32> {
        self.edges.last().map(|e| e.tail)
    }

    /// Index of the first anchor edge.
    pub fn anchor_position(&self) -> Option<usize> {
        self.anchor_positions.first().copied()
    }

    pub fn crosses_anchor(&self) -> bool {
        !self.anchor_positions.is_empty()
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_positions.len()
    }

    /// Exactly one anchor with as many edges before it as after it.
    pub fn is_symmetric(&self) -> bool {
        match self.anchor_positions.as_slice() {
            [pos] => *pos == self.edges.len() - 1 - pos,
            _ => false,
        }
    }

    /// No entity is visited twice.
    pub fn is_simple(&self) -> bool {
        let mut seen: Vec<u32> = Vec::with_capacity(self.edges.len() + 1);
        if let Some(s) = self.source() {
            seen.push(s);
        }
        for e in &self.edges {
            if seen.contains(&e.tail) {
                return false;
            }
            seen.push(e.tail);
        }
        true
    }

    pub fn is_chain(&self) -> bool {
        self.edges.windows(2).all(|w| w[0].tail == w[1].head)
    }
}

/// Lists every directed walk of length `1..=k` from `u` that ends at `v`.
pub fn enumerate_paths_oracle(
    graph: &MergedGraph,
    u: EntityId,
    v: EntityId,
    k: usize,
) -> Result<Vec<AlignmentPath>> {
    if k == 0 {
        return Err(Error::Precondition("hop budget K must be at least 1".into()));
    }
    if u.side == v.side {
        return Err(Error::Precondition(format!(
            "oracle needs entities on opposite sides, both are on {}",
            u.side
        )));
    }
    let (su, sv) = (graph.node(u), graph.node(v));
    let mut out = Vec::new();
    let mut stack: Vec<Edge> = Vec::with_capacity(k);
    let mut expanded = 0usize;
    walk(graph, su, sv, k, &mut stack, &mut out, &mut expanded)?;
    Ok(out)
}

fn walk(
    graph: &MergedGraph,
    at: u32,
    target: u32,
    k: usize,
    stack: &mut Vec<Edge>,
    out: &mut Vec<AlignmentPath>,
    expanded: &mut usize,
) -> Result<()> {
    if stack.len() == k {
        return Ok(());
    }
    for &(r, b) in graph.out_edges(at) {
        *expanded += 1;
        if *expanded > ORACLE_BUDGET {
            return Err(Error::Budget {
                budget: ORACLE_BUDGET,
            });
        }
        stack.push(Edge::new(at, r, b));
        if b == target {
            out.push(AlignmentPath::new(graph, stack.clone()));
        }
        walk(graph, b, target, k, stack, out, expanded)?;
        stack.pop();
    }
    Ok(())
}
