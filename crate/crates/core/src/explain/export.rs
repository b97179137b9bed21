use super::{edge_weights, nodes_of, Explanation};
use crate::error::Result;
use crate::extract::LayeredAsg;
use crate::kg::{MergedGraph, Side};
use crate::model::EdgeAttention;
use std::fmt::Write as _;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn node_line(out: &mut String, graph: &MergedGraph, node: u32, highlight: bool) {
    let shape = match graph.side_of(node) {
        Side::Kg1 => "ellipse",
        Side::Kg2 => "box",
    };
    let extra = if highlight { ", penwidth=2" } else { "" };
    let _ = writeln!(out, "  n{node} [label={}, shape={shape}{extra}];", quote(graph.entity_name(node)));
}

fn edge_line(out: &mut String, graph: &MergedGraph, head: u32, rel: u32, tail: u32, weight: f64) {
    let style = if graph.is_anchor_relation(rel) {
        ", style=dashed, color=red"
    } else {
        ""
    };
    let label = format!("{} ({weight:.3})", graph.relation_label(rel));
    let _ = writeln!(out, "  n{head} -> n{tail} [label={}{style}];", quote(&label));
}

/// DOT rendering of the paths of an explanation. Edge labels carry the
/// heaviest path weight through the edge; anchor edges are dashed.
pub fn explanation_to_dot(graph: &MergedGraph, ex: &Explanation) -> String {
    let edges = edge_weights(ex);
    let mut out = String::from("digraph explanation {\n  rankdir=LR;\n");
    for n in nodes_of(edges.keys().copied()) {
        node_line(&mut out, graph, n, n == ex.source || n == ex.target);
    }
    for (e, w) in &edges {
        edge_line(&mut out, graph, e.head, e.rel, e.tail, *w);
    }
    out.push_str("}\n");
    out
}

/// DOT rendering of a whole padded ASG with per-layer attention; self-loops
/// are omitted.
pub fn asg_to_dot(graph: &MergedGraph, asg: &LayeredAsg, attention: &EdgeAttention) -> String {
    let mut out = String::from("digraph asg {\n  rankdir=LR;\n");
    let edges = attention
        .layers
        .iter()
        .flatten()
        .filter(|(e, _)| !asg.is_self_loop(e))
        .map(|(e, _)| *e);
    for n in nodes_of(edges) {
        node_line(&mut out, graph, n, n == asg.source);
    }
    for (layer, l) in attention.layers.iter().enumerate() {
        for (e, w) in l.iter().filter(|(e, _)| !asg.is_self_loop(e)) {
            let _ = writeln!(out, "  // layer {}", layer + 1);
            edge_line(&mut out, graph, e.head, e.rel, e.tail, *w);
        }
    }
    out.push_str("}\n");
    out
}

pub fn explanation_to_json(ex: &Explanation) -> Result<String> {
    Ok(serde_json::to_string_pretty(ex)?)
}

pub fn explanation_from_json(text: &str) -> Result<Explanation> {
    Ok(serde_json::from_str(text)?)
}
