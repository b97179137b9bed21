//! Align-subgraph extraction.
//!
//! An align-subgraph for `(u, v)` with hop budget `K` is the set of edges that
//! lie on at least one directed walk of length `<= K` from `u` to `v` in the
//! merged graph. The merged variant takes the union over every entity of the
//! opposite graph; the symmetric variant keeps only walks that cross exactly
//! one anchor with equally long prefix and suffix.
//!
//! Results are layered for message passing: an edge is placed in layer `i`
//! (1-based) when its head is reachable within `i - 1` steps and its tail can
//! still reach a target within `K - i` steps. Shorter walks are therefore
//! available at every offset, which is what self-loop padding needs.

mod oracle;

pub use oracle::{enumerate_paths_oracle, AlignmentPath, ORACLE_BUDGET};

use crate::error::{Error, Result};
use crate::kg::{Edge, EntityId, MergedGraph, Side};
use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Which extraction algorithm produced (or should produce) an ASG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    Merged,
    Symmetric,
}

/// A K-hop align-subgraph rooted at `source`, as per-layer edge lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredAsg {
    /// Global node id of the source entity.
    pub source: u32,
    pub depth: usize,
    /// `layers[i]` holds the edges used at step `i + 1`, sorted.
    pub layers: Vec<Vec<Edge>>,
    /// Opposite-side nodes that can be scored, sorted.
    pub targets: Vec<u32>,
    /// Relation id of the padding self-loops, once added.
    #[serde(default)]
    pub self_loop: Option<u32>,
}

impl LayeredAsg {
    fn empty(source: u32, depth: usize) -> Self {
        Self {
            source,
            depth,
            layers: vec![Vec::new(); depth],
            targets: Vec::new(),
            self_loop: None,
        }
    }

    pub fn is_self_loop(&self, e: &Edge) -> bool {
        self.self_loop == Some(e.rel)
    }

    /// Distinct non-padding edges over all layers.
    pub fn edge_set(&self) -> BTreeSet<Edge> {
        self.layers
            .iter()
            .flatten()
            .filter(|e| !self.is_self_loop(e))
            .copied()
            .collect()
    }

    /// Total number of layered edges, padding included.
    pub fn num_layered_edges(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// All nodes touched by any layer, plus the source.
    pub fn nodes(&self) -> Vec<u32> {
        let mut set: BTreeSet<u32> = BTreeSet::from([self.source]);
        for e in self.layers.iter().flatten() {
            set.insert(e.head);
            set.insert(e.tail);
        }
        set.into_iter().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(Vec::is_empty)
    }

    /// Adds self-loop edges so that a node's state is carried forward while it
    /// is still needed: as the head of a later edge, or as a target.
    pub fn with_self_loops(&self, graph: &MergedGraph) -> LayeredAsg {
        if self.self_loop.is_some() {
            return self.clone();
        }
        let n = graph.num_nodes();
        let loop_rel = graph.self_loop_relation();
        let k = self.depth;
        // heads_after[i]: heads of edges in layers strictly after layer i (1-based).
        let mut heads_after = vec![FixedBitSet::with_capacity(n); k + 1];
        for i in (1..k).rev() {
            let mut set = heads_after[i + 1].clone();
            for e in &self.layers[i] {
                set.insert(e.head as usize);
            }
            heads_after[i] = set;
        }
        let mut is_target = FixedBitSet::with_capacity(n);
        for &t in &self.targets {
            is_target.insert(t as usize);
        }
        let mut alive = FixedBitSet::with_capacity(n);
        alive.insert(self.source as usize);
        let mut layers = Vec::with_capacity(k);
        for i in 1..=k {
            let mut layer = self.layers[i - 1].clone();
            let mut next = FixedBitSet::with_capacity(n);
            for b in alive.ones() {
                if is_target.contains(b) || heads_after[i].contains(b) {
                    layer.push(Edge::new(b as u32, loop_rel, b as u32));
                    next.insert(b);
                }
            }
            for e in &self.layers[i - 1] {
                next.insert(e.tail as usize);
            }
            layer.sort_unstable();
            layer.dedup();
            layers.push(layer);
            alive = next;
        }
        LayeredAsg {
            source: self.source,
            depth: k,
            layers,
            targets: self.targets.clone(),
            self_loop: Some(loop_rel),
        }
    }

    /// Checks that every edge in layer `i` starts from a node holding a state
    /// before that layer: the source, or a tail of layer `i - 1` once padded
    /// (any earlier layer otherwise).
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != self.depth {
            return Err(Error::Precondition(format!(
                "ASG declares depth {} but has {} layers",
                self.depth,
                self.layers.len()
            )));
        }
        let padded = self.self_loop.is_some();
        let mut alive: BTreeSet<u32> = BTreeSet::from([self.source]);
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(e) = layer.iter().find(|e| !alive.contains(&e.head)) {
                return Err(Error::Precondition(format!(
                    "node {} has no incoming state before layer {}",
                    e.head,
                    i + 1
                )));
            }
            let tails = layer.iter().map(|e| e.tail);
            if padded {
                alive = tails.collect();
            } else {
                alive.extend(tails);
            }
        }
        Ok(())
    }
}

fn check_depth(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Precondition("hop budget K must be at least 1".into()));
    }
    Ok(())
}

/// Nodes reachable from `source` within `0..=k` steps; `within[i]` is the set
/// for `i` steps.
fn reach_within(graph: &MergedGraph, source: u32, k: usize) -> Vec<FixedBitSet> {
    let n = graph.num_nodes();
    let mut within = Vec::with_capacity(k + 1);
    let mut current = FixedBitSet::with_capacity(n);
    current.insert(source as usize);
    let mut frontier = vec![source];
    within.push(current.clone());
    for _ in 0..k {
        let mut next_frontier = Vec::new();
        for &a in &frontier {
            for &(_, b) in graph.out_edges(a) {
                if !current.put(b as usize) {
                    next_frontier.push(b);
                }
            }
        }
        within.push(current.clone());
        frontier = next_frontier;
    }
    within
}

/// Layers edges by the "within" rule against a distance-to-target vector.
fn layer_edges(graph: &MergedGraph, within: &[FixedBitSet], dist: &[u32], k: usize) -> Vec<Vec<Edge>> {
    (1..=k)
        .map(|i| {
            let budget = (k - i) as u32;
            let mut layer = Vec::new();
            for a in within[i - 1].ones() {
                if dist[a] > budget + 1 {
                    continue;
                }
                for &(r, b) in graph.out_edges(a as u32) {
                    if dist[b as usize] <= budget {
                        layer.push(Edge::new(a as u32, r, b));
                    }
                }
            }
            layer
        })
        .collect()
}

/// K-hop align-subgraph between a single pair.
pub fn extract_pair_asg(graph: &MergedGraph, u: EntityId, v: EntityId, k: usize) -> Result<LayeredAsg> {
    check_depth(k)?;
    if u.side == v.side {
        return Err(Error::Precondition(format!(
            "pair extraction needs entities on opposite sides, both are on {}",
            u.side
        )));
    }
    let (su, sv) = (graph.node(u), graph.node(v));
    let dist = graph.distances_to(sv, k);
    if dist[su as usize] as usize > k {
        return Ok(LayeredAsg::empty(su, k));
    }
    let within = reach_within(graph, su, k);
    let mut asg = LayeredAsg::empty(su, k);
    asg.layers = layer_edges(graph, &within, &dist, k);
    asg.targets = vec![sv];
    Ok(asg)
}

/// Union of the pair align-subgraphs from `u` to every entity of the other
/// graph, computed in one forward sweep.
pub fn extract_merged_asg(graph: &MergedGraph, u: EntityId, k: usize) -> Result<LayeredAsg> {
    check_depth(k)?;
    let su = graph.node(u);
    let opposite = u.side.opposite();
    let dist = graph.distance_to_side(opposite);
    let within = reach_within(graph, su, k);
    let mut asg = LayeredAsg::empty(su, k);
    asg.layers = layer_edges(graph, &within, dist, k);
    asg.targets = graph
        .side_range(opposite)
        .filter(|&t| within[k].contains(t as usize))
        .collect();
    Ok(asg)
}

/// Align-subgraph restricted to symmetric walks: `p` edges inside the source
/// graph, one anchor, then `p` edges inside the target graph (`2p + 1 <= K`,
/// `p = 0` being a direct anchor).
pub fn extract_symmetric_asg(graph: &MergedGraph, u: EntityId, k: usize) -> Result<LayeredAsg> {
    check_depth(k)?;
    let n = graph.num_nodes();
    let su = graph.node(u);
    let source_side = u.side;
    let target_side = source_side.opposite();
    let in_side = |x: u32, s: Side| graph.side_of(x) == s;
    let step = |from: &FixedBitSet, side: Side| {
        let mut next = FixedBitSet::with_capacity(n);
        for a in from.ones() {
            for &(r, b) in graph.out_edges(a as u32) {
                if !graph.is_anchor_relation(r) && in_side(b, side) {
                    next.insert(b as usize);
                }
            }
        }
        next
    };
    let back = |to: &FixedBitSet, side: Side| {
        let mut prev = FixedBitSet::with_capacity(n);
        for b in to.ones() {
            for &(a, r) in graph.in_edges(b as u32) {
                if !graph.is_anchor_relation(r) && in_side(a, side) {
                    prev.insert(a as usize);
                }
            }
        }
        prev
    };

    let max_p = (k - 1) / 2;
    let mut layers: Vec<BTreeSet<Edge>> = vec![BTreeSet::new(); k];
    let mut targets = BTreeSet::new();
    let mut forward = vec![{
        let mut s = FixedBitSet::with_capacity(n);
        s.insert(su as usize);
        s
    }];
    for t in 1..=max_p {
        let next = step(&forward[t - 1], source_side);
        forward.push(next);
    }
    // walkable[t]: target-side nodes with a target-side walk of exactly t steps
    let mut walkable = vec![{
        let mut s = FixedBitSet::with_capacity(n);
        for x in graph.side_range(target_side) {
            s.insert(x as usize);
        }
        s
    }];
    for t in 1..=max_p {
        let prev = back(&walkable[t - 1], target_side);
        walkable.push(prev);
    }

    for p in 0..=max_p {
        let slack = k - (2 * p + 1);
        let mut place = |pos: usize, e: Edge| {
            for layer in pos..=pos + slack {
                layers[layer - 1].insert(e);
            }
        };
        let mut crossing_heads = FixedBitSet::with_capacity(n);
        let mut crossing_tails = FixedBitSet::with_capacity(n);
        for x in forward[p].ones() {
            for &(r, y) in graph.out_edges(x as u32) {
                if graph.is_anchor_relation(r) && in_side(y, target_side) && walkable[p].contains(y as usize) {
                    place(p + 1, Edge::new(x as u32, r, y));
                    crossing_heads.insert(x);
                    crossing_tails.insert(y as usize);
                }
            }
        }
        if crossing_heads.count_ones(..) == 0 {
            continue;
        }
        // prefix: a in forward[t-1], b can reach a crossing head in p-t steps
        let mut to_crossing = vec![crossing_heads];
        for t in 1..p {
            let prev = back(&to_crossing[t - 1], source_side);
            to_crossing.push(prev);
        }
        for t in 1..=p {
            let goal = &to_crossing[p - t];
            for a in forward[t - 1].ones() {
                for &(r, b) in graph.out_edges(a as u32) {
                    if !graph.is_anchor_relation(r) && in_side(b, source_side) && goal.contains(b as usize) {
                        place(t, Edge::new(a as u32, r, b));
                    }
                }
            }
        }
        // suffix: c reached from a crossing tail in t-1 steps, d keeps p-t steps
        let mut from_crossing = crossing_tails;
        for t in 1..=p {
            let goal = &walkable[p - t];
            let mut next = FixedBitSet::with_capacity(n);
            for c in from_crossing.ones() {
                for &(r, d) in graph.out_edges(c as u32) {
                    if !graph.is_anchor_relation(r) && in_side(d, target_side) && goal.contains(d as usize) {
                        place(p + 1 + t, Edge::new(c as u32, r, d));
                        next.insert(d as usize);
                    }
                }
            }
            from_crossing = next;
        }
        targets.extend(from_crossing.ones().map(|x| x as u32));
    }

    Ok(LayeredAsg {
        source: su,
        depth: k,
        layers: layers.into_iter().map(|l| l.into_iter().collect()).collect(),
        targets: targets.into_iter().collect(),
        self_loop: None,
    })
}

/// Dispatches on [`ExtractionMode`].
pub fn extract(graph: &MergedGraph, u: EntityId, k: usize, mode: ExtractionMode) -> Result<LayeredAsg> {
    match mode {
        ExtractionMode::Merged => extract_merged_asg(graph, u, k),
        ExtractionMode::Symmetric => extract_symmetric_asg(graph, u, k),
    }
}

#[cfg(test)]
mod tests;
