//! The merged bidirectional graph: both relation sets, their reversals, and
//! anchor links in both directions, with CSR adjacency by head and by tail.

use super::{AlignedPair, AnchorSet, EntityId, KnowledgeGraph, Side};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub head: u32,
    pub rel: u32,
    pub tail: u32,
}

impl Edge {
    pub fn new(head: u32, rel: u32, tail: u32) -> Self {
        Self { head, rel, tail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    Forward,
    Reversed,
    Anchor,
    AnchorReversed,
    SelfLoop,
}

impl RelationKind {
    pub fn is_anchor(self) -> bool {
        matches!(self, RelationKind::Anchor | RelationKind::AnchorReversed)
    }
}

/// Union graph over both sides. Node ids are global: KG1 entities occupy
/// `0..n1`, KG2 entities `n1..n1+n2`.
///
/// Relation ids: forward relations of KG1 then KG2 (`0..m`), their reversals
/// (`m..2m`), then `anchor`, `anchor_reversed` and `self_loop`.
#[derive(Debug, Clone)]
pub struct MergedGraph {
    n1: usize,
    n2: usize,
    m1: usize,
    m2: usize,
    relation_names: Vec<String>,
    entity_names: Vec<String>,
    anchors: Vec<AlignedPair>,
    base_triples: usize,
    edges: Vec<Edge>,
    out_offsets: Vec<usize>,
    out_adj: Vec<(u32, u32)>,
    in_offsets: Vec<usize>,
    in_adj: Vec<(u32, u32)>,
    dist_to_side: [Vec<u32>; 2],
}

/// Distance value for "cannot reach".
pub const UNREACHABLE: u32 = u32::MAX;

pub fn build_merged_graph(
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
    anchors: &AnchorSet,
) -> Result<MergedGraph> {
    if g1.side != Side::Kg1 || g2.side != Side::Kg2 {
        return Err(Error::Precondition(
            "build_merged_graph expects (KG1, KG2) in that order".into(),
        ));
    }
    let n1 = g1.num_entities();
    let n2 = g2.num_entities();
    let m1 = g1.num_relations();
    let m2 = g2.num_relations();
    let m = m1 + m2;

    let mut pairs: Vec<AlignedPair> = Vec::with_capacity(anchors.len());
    let mut seen = HashSet::new();
    for &(a, b) in anchors.pairs() {
        let (l, r) = match (a.side, b.side) {
            (Side::Kg1, Side::Kg2) => (a, b),
            (Side::Kg2, Side::Kg1) => (b, a),
            _ => {
                return Err(Error::Data(format!(
                    "anchor ({}:{}, {}:{}) has both endpoints on {}",
                    a.side, a.index, b.side, b.index, a.side
                )))
            }
        };
        if l.index as usize >= n1 || r.index as usize >= n2 {
            return Err(Error::Data(format!(
                "anchor ({}, {}) references an unknown entity",
                l.index, r.index
            )));
        }
        let p = AlignedPair::new(l.index, r.index);
        if seen.insert(p) {
            pairs.push(p);
        }
    }

    let mut edges = Vec::with_capacity(2 * (g1.triples().len() + g2.triples().len() + pairs.len()));
    for t in g1.triples() {
        edges.push(Edge::new(t.head, t.rel, t.tail));
    }
    for t in g2.triples() {
        edges.push(Edge::new(
            t.head + n1 as u32,
            t.rel + m1 as u32,
            t.tail + n1 as u32,
        ));
    }
    let anchor = 2 * m as u32;
    for p in &pairs {
        edges.push(Edge::new(p.left, anchor, p.right + n1 as u32));
    }
    let base = edges.len();
    for i in 0..base {
        let e = edges[i];
        let rev = if e.rel == anchor { anchor + 1 } else { e.rel + m as u32 };
        edges.push(Edge::new(e.tail, rev, e.head));
    }

    let n = n1 + n2;
    let (out_offsets, out_adj) = csr(n, &edges, |e| (e.head, (e.rel, e.tail)));
    let (in_offsets, in_adj) = csr(n, &edges, |e| (e.tail, (e.head, e.rel)));

    let mut relation_names = Vec::with_capacity(m);
    relation_names.extend(g1.relations.names().iter().cloned());
    relation_names.extend(g2.relations.names().iter().cloned());
    let mut entity_names = Vec::with_capacity(n);
    entity_names.extend(g1.entities.names().iter().cloned());
    entity_names.extend(g2.entities.names().iter().cloned());

    let mut g = MergedGraph {
        n1,
        n2,
        m1,
        m2,
        relation_names,
        entity_names,
        anchors: pairs,
        base_triples: base,
        edges,
        out_offsets,
        out_adj,
        in_offsets,
        in_adj,
        dist_to_side: [Vec::new(), Vec::new()],
    };
    g.dist_to_side = [g.bfs_to_side(Side::Kg1), g.bfs_to_side(Side::Kg2)];
    Ok(g)
}

fn csr<F>(n: usize, edges: &[Edge], key: F) -> (Vec<usize>, Vec<(u32, u32)>)
where
    F: Fn(&Edge) -> (u32, (u32, u32)),
{
    let mut counts = vec![0usize; n + 1];
    for e in edges {
        counts[key(e).0 as usize + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut fill = counts.clone();
    let mut adj = vec![(0u32, 0u32); edges.len()];
    for e in edges {
        let (node, item) = key(e);
        adj[fill[node as usize]] = item;
        fill[node as usize] += 1;
    }
    for i in 0..n {
        adj[counts[i]..counts[i + 1]].sort_unstable();
    }
    (counts, adj)
}

impl MergedGraph {
    pub fn num_nodes(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn side_len(&self, side: Side) -> usize {
        match side {
            Side::Kg1 => self.n1,
            Side::Kg2 => self.n2,
        }
    }

    /// Global node range occupied by one side.
    pub fn side_range(&self, side: Side) -> std::ops::Range<u32> {
        match side {
            Side::Kg1 => 0..self.n1 as u32,
            Side::Kg2 => self.n1 as u32..(self.n1 + self.n2) as u32,
        }
    }

    pub fn side_of(&self, node: u32) -> Side {
        if (node as usize) < self.n1 {
            Side::Kg1
        } else {
            Side::Kg2
        }
    }

    pub fn node(&self, e: EntityId) -> u32 {
        match e.side {
            Side::Kg1 => e.index,
            Side::Kg2 => e.index + self.n1 as u32,
        }
    }

    pub fn entity(&self, node: u32) -> EntityId {
        if (node as usize) < self.n1 {
            EntityId::new(Side::Kg1, node)
        } else {
            EntityId::new(Side::Kg2, node - self.n1 as u32)
        }
    }

    pub fn entity_name(&self, node: u32) -> &str {
        &self.entity_names[node as usize]
    }

    /// Number of forward relations over both graphs.
    pub fn num_forward_relations(&self) -> usize {
        self.m1 + self.m2
    }

    /// Size of the relation id space, including anchor and self-loop ids.
    pub fn num_relations(&self) -> usize {
        2 * self.num_forward_relations() + 3
    }

    pub fn anchor_relation(&self) -> u32 {
        2 * self.num_forward_relations() as u32
    }

    pub fn anchor_reversed_relation(&self) -> u32 {
        self.anchor_relation() + 1
    }

    pub fn self_loop_relation(&self) -> u32 {
        self.anchor_relation() + 2
    }

    pub fn relation_kind(&self, rel: u32) -> RelationKind {
        let m = self.num_forward_relations() as u32;
        match rel {
            r if r < m => RelationKind::Forward,
            r if r < 2 * m => RelationKind::Reversed,
            r if r == 2 * m => RelationKind::Anchor,
            r if r == 2 * m + 1 => RelationKind::AnchorReversed,
            _ => RelationKind::SelfLoop,
        }
    }

    pub fn is_anchor_relation(&self, rel: u32) -> bool {
        self.relation_kind(rel).is_anchor()
    }

    /// Name of the forward relation underlying `rel` (anchors and self-loops
    /// get fixed names).
    pub fn relation_base_name(&self, rel: u32) -> &str {
        let m = self.num_forward_relations() as u32;
        match self.relation_kind(rel) {
            RelationKind::Forward => &self.relation_names[rel as usize],
            RelationKind::Reversed => &self.relation_names[(rel - m) as usize],
            RelationKind::Anchor | RelationKind::AnchorReversed => "anchor",
            RelationKind::SelfLoop => "self_loop",
        }
    }

    /// Human-readable label; reversed relations carry a trailing `'`.
    pub fn relation_label(&self, rel: u32) -> String {
        match self.relation_kind(rel) {
            RelationKind::Reversed | RelationKind::AnchorReversed => {
                format!("{}'", self.relation_base_name(rel))
            }
            _ => self.relation_base_name(rel).to_owned(),
        }
    }

    pub fn anchors(&self) -> &[AlignedPair] {
        &self.anchors
    }

    /// All edges of T: forward edges first, then their reversals.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// |T1| + |T2| + |A|, i.e. half of [`Self::num_edges`].
    pub fn num_forward_edges(&self) -> usize {
        self.base_triples
    }

    /// (relation, tail) pairs leaving `node`, sorted.
    pub fn out_edges(&self, node: u32) -> &[(u32, u32)] {
        let n = node as usize;
        &self.out_adj[self.out_offsets[n]..self.out_offsets[n + 1]]
    }

    /// (head, relation) pairs entering `node`, sorted.
    pub fn in_edges(&self, node: u32) -> &[(u32, u32)] {
        let n = node as usize;
        &self.in_adj[self.in_offsets[n]..self.in_offsets[n + 1]]
    }

    /// Shortest directed distance from every node to the nearest node of
    /// `side` ([`UNREACHABLE`] when none).
    pub fn distance_to_side(&self, side: Side) -> &[u32] {
        match side {
            Side::Kg1 => &self.dist_to_side[0],
            Side::Kg2 => &self.dist_to_side[1],
        }
    }

    /// Directed distances from every node to `target`, explored backwards up
    /// to `limit` steps.
    pub fn distances_to(&self, target: u32, limit: usize) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.num_nodes()];
        dist[target as usize] = 0;
        let mut queue = VecDeque::from([target]);
        while let Some(x) = queue.pop_front() {
            let d = dist[x as usize];
            if d as usize >= limit {
                continue;
            }
            for &(h, _) in self.in_edges(x) {
                if dist[h as usize] == UNREACHABLE {
                    dist[h as usize] = d + 1;
                    queue.push_back(h);
                }
            }
        }
        dist
    }

    fn bfs_to_side(&self, side: Side) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.num_nodes()];
        let mut queue = VecDeque::new();
        for v in self.side_range(side) {
            dist[v as usize] = 0;
            queue.push_back(v);
        }
        while let Some(x) = queue.pop_front() {
            let d = dist[x as usize];
            for &(h, _) in self.in_edges(x) {
                if dist[h as usize] == UNREACHABLE {
                    dist[h as usize] = d + 1;
                    queue.push_back(h);
                }
            }
        }
        dist
    }
}
