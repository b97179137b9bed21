//! Alignment paths behind a prediction, and rules mined from them.

use crate::error::{Error, Result};
use crate::extract::{AlignmentPath, ExtractionMode, LayeredAsg};
use crate::kg::{Edge, MergedGraph, RelationKind, Side};
use crate::model::EdgeAttention;
use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

mod export;

pub use export::{asg_to_dot, explanation_from_json, explanation_to_dot, explanation_to_json};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Paths kept per explanation before enumeration stops.
pub const MAX_PATHS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPath {
    pub path: AlignmentPath,
    /// Product of the attention weights along the path.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub source: u32,
    pub target: u32,
    pub threshold: f64,
    /// Surviving paths, heaviest first.
    pub paths: Vec<WeightedPath>,
    /// Heaviest unpruned path, set only when nothing survives.
    pub fallback: Option<WeightedPath>,
    /// Enumeration hit [`MAX_PATHS`].
    pub truncated: bool,
}

/// Prunes edges with attention below `threshold` and lists the remaining
/// source-to-`gold` paths of a padded ASG. Self-loops are dropped from the
/// paths and carry no weight; walks differing only in where they idle are
/// merged, keeping the larger weight.
///
/// A symmetric ASG is a union of symmetric walks, but walks through it can
/// mix them; in [`ExtractionMode::Symmetric`] only symmetric walks are kept.
pub fn extract_explanation(
    graph: &MergedGraph,
    asg: &LayeredAsg,
    attention: &EdgeAttention,
    gold: u32,
    threshold: f64,
    mode: ExtractionMode,
) -> Result<Explanation> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Precondition(format!("threshold {threshold} outside [0, 1)")));
    }
    if asg.self_loop.is_none() {
        return Err(Error::Precondition("explanations need a padded ASG".into()));
    }
    if attention.layers.len() != asg.depth || attention.layers.iter().zip(&asg.layers).any(|(a, l)| a.len() != l.len()) {
        return Err(Error::Precondition("attention does not match the ASG layers".into()));
    }
    if asg.targets.binary_search(&gold).is_err() {
        return Err(Error::Precondition(format!("{} is not reachable from the source", graph.entity_name(gold))));
    }
    let mut walker = Walker::new(graph, asg, attention, gold, threshold);
    walker.run();
    let mut paths = walker.into_paths();
    let truncated = paths.len() >= MAX_PATHS;
    if mode == ExtractionMode::Symmetric {
        paths.retain(|p| p.path.is_symmetric());
    }
    sort_paths(&mut paths);
    let fallback = if paths.is_empty() {
        best_path(graph, asg, attention, gold)
    } else {
        None
    };
    Ok(Explanation {
        source: asg.source,
        target: gold,
        threshold,
        paths,
        fallback,
        truncated,
    })
}

fn sort_paths(paths: &mut [WeightedPath]) {
    paths.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.path.cmp(&b.path)));
}

struct Walker<'a> {
    graph: &'a MergedGraph,
    asg: &'a LayeredAsg,
    attention: &'a EdgeAttention,
    threshold: f64,
    /// `useful[i]`: nodes that reach gold from layer `i` through kept edges.
    useful: Vec<FixedBitSet>,
    stack: Vec<Edge>,
    found: HashMap<Vec<Edge>, f64>,
}

impl<'a> Walker<'a> {
    fn new(graph: &'a MergedGraph, asg: &'a LayeredAsg, attention: &'a EdgeAttention, gold: u32, threshold: f64) -> Self {
        let n = graph.num_nodes();
        let k = asg.depth;
        let mut useful = vec![FixedBitSet::with_capacity(n); k + 1];
        useful[k].insert(gold as usize);
        for i in (0..k).rev() {
            let mut set = FixedBitSet::with_capacity(n);
            for (e, &(_, a)) in asg.layers[i].iter().zip(&attention.layers[i]) {
                if a >= threshold && useful[i + 1].contains(e.tail as usize) {
                    set.insert(e.head as usize);
                }
            }
            useful[i] = set;
        }
        Self {
            graph,
            asg,
            attention,
            threshold,
            useful,
            stack: Vec::new(),
            found: HashMap::new(),
        }
    }

    fn run(&mut self) {
        if self.useful[0].contains(self.asg.source as usize) {
            self.walk(0, self.asg.source, 1.0);
        }
    }

    fn walk(&mut self, layer: usize, node: u32, weight: f64) {
        if self.found.len() >= MAX_PATHS {
            return;
        }
        if layer == self.asg.depth {
            let w = self.found.entry(self.stack.clone()).or_insert(weight);
            *w = w.max(weight);
            return;
        }
        let edges = &self.asg.layers[layer];
        let start = edges.partition_point(|e| e.head < node);
        for idx in start..edges.len() {
            let e = edges[idx];
            if e.head != node {
                break;
            }
            let a = self.attention.layers[layer][idx].1;
            if a < self.threshold || !self.useful[layer + 1].contains(e.tail as usize) {
                continue;
            }
            if self.asg.is_self_loop(&e) {
                self.walk(layer + 1, e.tail, weight);
            } else {
                self.stack.push(e);
                self.walk(layer + 1, e.tail, weight * a);
                self.stack.pop();
            }
        }
    }

    fn into_paths(self) -> Vec<WeightedPath> {
        let graph = self.graph;
        self.found
            .into_iter()
            .filter(|(edges, _)| !edges.is_empty())
            .map(|(edges, weight)| WeightedPath {
                path: AlignmentPath::new(graph, edges),
                weight,
            })
            .collect()
    }
}

/// Heaviest source-to-gold path ignoring the threshold.
fn best_path(graph: &MergedGraph, asg: &LayeredAsg, attention: &EdgeAttention, gold: u32) -> Option<WeightedPath> {
    // best[node] = (weight, edges) over walks that reach node by the current layer
    let mut best: HashMap<u32, (f64, Vec<Edge>)> = HashMap::from([(asg.source, (1.0, Vec::new()))]);
    for (edges, weights) in asg.layers.iter().zip(&attention.layers) {
        let mut next: HashMap<u32, (f64, Vec<Edge>)> = HashMap::new();
        for (e, &(_, a)) in edges.iter().zip(weights) {
            let Some((w, path)) = best.get(&e.head) else { continue };
            let (w, path) = if asg.is_self_loop(e) {
                (*w, path.clone())
            } else {
                let mut p = path.clone();
                p.push(*e);
                (w * a, p)
            };
            let slot = next.entry(e.tail).or_insert((f64::NEG_INFINITY, Vec::new()));
            if w > slot.0 || (w == slot.0 && path < slot.1) {
                *slot = (w, path);
            }
        }
        best = next;
    }
    best.remove(&gold).filter(|(_, p)| !p.is_empty()).map(|(weight, edges)| WeightedPath {
        path: AlignmentPath::new(graph, edges),
        weight,
    })
}

/// One relation step of a rule body.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationStep {
    pub relation: String,
    /// Traversed against the direction of its triples.
    pub inverse: bool,
}

impl fmt::Display for RelationStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverse {
            write!(f, "{}'", self.relation)
        } else {
            f.write_str(&self.relation)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuleShape {
    OneHop,
    Symmetric { k: usize },
    Asymmetric { k1: usize, k2: usize },
}

impl RuleShape {
    pub fn classify(k1: usize, k2: usize) -> Self {
        match (k1, k2) {
            (1, 1) => Self::OneHop,
            (a, b) if a == b => Self::Symmetric { k: a },
            (k1, k2) => Self::Asymmetric { k1, k2 },
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, Self::Asymmetric { .. })
    }
}

impl fmt::Display for RuleShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OneHop => f.write_str("one-hop"),
            Self::Symmetric { k } => write!(f, "symmetric-{k}"),
            Self::Asymmetric { k1, k2 } => write!(f, "asymmetric-{k1}:{k2}"),
        }
    }
}

/// A relation-sequence rule, read from the first graph to the second:
/// `source` leads from the first-graph entity to the anchor, `target` from
/// the anchor's partner to the second-graph entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSignature {
    pub source: Vec<RelationStep>,
    pub target: Vec<RelationStep>,
    /// Index of the anchor edge along the path.
    pub anchor_position: usize,
    pub hops: usize,
    /// Number of explained pairs with at least one path of this form.
    pub support: usize,
    /// Mean over supporting pairs of their heaviest matching path.
    pub mean_weight: f64,
    pub shape: RuleShape,
}

impl RuleSignature {
    /// Whether this is the rule `source(X, A) ∧ anchor(A, B) ∧ target(Y, B)`,
    /// with both chains given by forward relation names walked towards the
    /// anchor.
    pub fn matches_chains(&self, source: &[String], target: &[String]) -> bool {
        let fwd = |steps: &[RelationStep], names: &[String]| {
            steps.len() == names.len() && steps.iter().zip(names).all(|(s, n)| !s.inverse && &s.relation == n)
        };
        let inv = |steps: &[RelationStep], names: &[String]| {
            steps.len() == names.len() && steps.iter().zip(names.iter().rev()).all(|(s, n)| s.inverse && &s.relation == n)
        };
        fwd(&self.source, source) && inv(&self.target, target)
    }

    fn key(&self) -> (Vec<RelationStep>, Vec<RelationStep>) {
        (self.source.clone(), self.target.clone())
    }
}

impl fmt::Display for RuleSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &[RelationStep]| s.iter().map(ToString::to_string).collect::<Vec<_>>();
        let mut parts = join(&self.source);
        parts.push("anchor".into());
        parts.extend(join(&self.target));
        write!(f, "{} [{}]", parts.join(" / "), self.shape)
    }
}

fn inverse_relation(graph: &MergedGraph, rel: u32) -> u32 {
    let m = graph.num_forward_relations() as u32;
    match graph.relation_kind(rel) {
        RelationKind::Forward => rel + m,
        RelationKind::Reversed => rel - m,
        RelationKind::Anchor => graph.anchor_reversed_relation(),
        RelationKind::AnchorReversed => graph.anchor_relation(),
        RelationKind::SelfLoop => rel,
    }
}

/// The path walked backwards when it runs from the second graph to the first.
fn oriented(graph: &MergedGraph, path: &AlignmentPath) -> Option<Vec<Edge>> {
    let source = path.source()?;
    Some(match graph.side_of(source) {
        Side::Kg1 => path.edges.clone(),
        Side::Kg2 => path
            .edges
            .iter()
            .rev()
            .map(|e| Edge::new(e.tail, inverse_relation(graph, e.rel), e.head))
            .collect(),
    })
}

fn signature_of(graph: &MergedGraph, path: &AlignmentPath) -> Option<(Vec<RelationStep>, Vec<RelationStep>)> {
    if path.anchor_count() != 1 {
        return None;
    }
    let edges = oriented(graph, path)?;
    let pos = edges.iter().position(|e| graph.is_anchor_relation(e.rel))?;
    let step = |e: &Edge| RelationStep {
        relation: graph.relation_base_name(e.rel).to_owned(),
        inverse: graph.relation_kind(e.rel) == RelationKind::Reversed,
    };
    let source: Vec<RelationStep> = edges[..pos].iter().map(step).collect();
    let target: Vec<RelationStep> = edges[pos + 1..].iter().map(step).collect();
    // a rule needs at least one relation on each side of the anchor
    if source.is_empty() || target.is_empty() {
        return None;
    }
    Some((source, target))
}

/// Groups the surviving paths of many explanations by relation signature,
/// ranked by support then mean weight. An explanation with no surviving path
/// contributes its fallback. Paths crossing zero or several anchors, or with
/// no relation on one side, are not rules and are skipped.
pub fn mine_rules(graph: &MergedGraph, explanations: &[Explanation]) -> Vec<RuleSignature> {
    let mut groups: BTreeMap<(Vec<RelationStep>, Vec<RelationStep>), Vec<f64>> = BTreeMap::new();
    for ex in explanations {
        let mut per_pair: BTreeMap<(Vec<RelationStep>, Vec<RelationStep>), f64> = BTreeMap::new();
        for wp in ex.paths.iter().chain(&ex.fallback) {
            if let Some(sig) = signature_of(graph, &wp.path) {
                let w = per_pair.entry(sig).or_insert(wp.weight);
                *w = w.max(wp.weight);
            }
        }
        for (sig, w) in per_pair {
            groups.entry(sig).or_default().push(w);
        }
    }
    let mut rules: Vec<RuleSignature> = groups
        .into_iter()
        .map(|((source, target), weights)| {
            let (k1, k2) = (source.len(), target.len());
            RuleSignature {
                anchor_position: k1,
                hops: k1 + k2 + 1,
                support: weights.len(),
                mean_weight: weights.iter().sum::<f64>() / weights.len() as f64,
                shape: RuleShape::classify(k1, k2),
                source,
                target,
            }
        })
        .collect();
    rules.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.mean_weight.total_cmp(&a.mean_weight))
            .then_with(|| a.key().cmp(&b.key()))
    });
    rules
}

/// Plain-text table of ranked rules.
pub fn rules_table(rules: &[RuleSignature]) -> String {
    let mut out = String::from("rank  support  weight  hops  rule\n");
    for (i, r) in rules.iter().enumerate() {
        let _ = writeln!(out, "{:>4}  {:>7}  {:>6.3}  {:>4}  {r}", i + 1, r.support, r.mean_weight, r.hops);
    }
    out
}

/// Distinct edges across the paths of an explanation, with their largest
/// attention-path weight.
pub(crate) fn edge_weights(ex: &Explanation) -> BTreeMap<Edge, f64> {
    let mut out = BTreeMap::new();
    for wp in ex.paths.iter().chain(&ex.fallback) {
        for &e in &wp.path.edges {
            let w: &mut f64 = out.entry(e).or_insert(wp.weight);
            *w = w.max(wp.weight);
        }
    }
    out
}

pub(crate) fn nodes_of(edges: impl IntoIterator<Item = Edge>) -> BTreeSet<u32> {
    edges.into_iter().flat_map(|e| [e.head, e.tail]).collect()
}
