use crate::error::{Error, Result};
use crate::extract::ExtractionMode;
use crate::kg::{AlignedPair, EntityId, MergedGraph, Side};
use crate::mm::ModalData;
use crate::model::Model;
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fraction of ranks `<= k`.
pub fn hits_at(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

/// Mean reciprocal rank.
pub fn mean_reciprocal_rank(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

/// 1-based rank of `gold` among `candidates` (ids `0..candidates.len()`).
/// Finite scores come first by descending score; ties and unreachable
/// (`-inf`) candidates are ordered by id.
pub fn rank_of<T: Scalar>(scores: &[T], gold: usize) -> usize {
    let g = scores[gold];
    let before = |(i, &s): (usize, &T)| {
        if g == T::neg_infinity() {
            s != T::neg_infinity() || i < gold
        } else {
            s > g || (s == g && i < gold)
        }
    };
    1 + scores.iter().enumerate().filter(|&p| before(p)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRank {
    pub source: EntityId,
    pub gold: EntityId,
    pub rank: usize,
    pub reachable: bool,
    /// Reached opposite-side entities over the opposite side's size.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub queries: usize,
    pub hits1: f64,
    pub hits10: f64,
    pub mrr: f64,
    pub coverage: f64,
    pub reachability: f64,
}

impl Metrics {
    pub fn from_ranks(ranks: &[QueryRank]) -> Self {
        let r: Vec<usize> = ranks.iter().map(|q| q.rank).collect();
        let n = ranks.len().max(1) as f64;
        Self {
            queries: ranks.len(),
            hits1: hits_at(&r, 1),
            hits10: hits_at(&r, 10),
            mrr: mean_reciprocal_rank(&r),
            coverage: ranks.iter().map(|q| q.coverage).sum::<f64>() / n,
            reachability: ranks.iter().filter(|q| q.reachable).count() as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Both directions pooled.
    pub overall: Metrics,
    pub kg1_to_kg2: Metrics,
    pub kg2_to_kg1: Metrics,
    pub ranks: Vec<QueryRank>,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<QueryRank>) -> Self {
        let (fwd, back): (Vec<QueryRank>, Vec<QueryRank>) = ranks.iter().partition(|q| q.source.side == Side::Kg1);
        Self {
            overall: Metrics::from_ranks(&ranks),
            kg1_to_kg2: Metrics::from_ranks(&fwd),
            kg2_to_kg1: Metrics::from_ranks(&back),
            ranks,
        }
    }

    /// Aligned plain-text table of the three metric rows.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>7} {:>7} {:>7} {:>7} {:>9} {:>12}\n",
            "direction", "queries", "H@1", "H@10", "MRR", "coverage", "reachability"
        );
        for (name, m) in [("overall", &self.overall), ("kg1->kg2", &self.kg1_to_kg2), ("kg2->kg1", &self.kg2_to_kg1)] {
            out.push_str(&format!(
                "{:<10} {:>7} {:>7.4} {:>7.4} {:>7.4} {:>9.4} {:>12.4}\n",
                name, m.queries, m.hits1, m.hits10, m.mrr, m.coverage, m.reachability
            ));
        }
        out
    }
}

/// Ranks both directions of every test pair on `graph`, which should carry
/// all seed alignments as anchors.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    graph: &MergedGraph,
    test: &[AlignedPair],
    extraction: ExtractionMode,
    modal: Option<&ModalData<T>>,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    model.check_graph(graph)?;
    let queries: Vec<(EntityId, EntityId)> = test
        .iter()
        .flat_map(|p| [(p.left_entity(), p.right_entity()), (p.right_entity(), p.left_entity())])
        .collect();
    let ranks = queries
        .par_iter()
        .map(|&(u, gold)| {
            let scored = model.score_source(graph, u, extraction, modal)?;
            let range = graph.side_range(gold.side);
            let mut row = vec![T::neg_infinity(); range.len()];
            for (&t, &s) in scored.targets.iter().zip(&scored.scores) {
                row[(t - range.start) as usize] = s;
            }
            let g = gold.index as usize;
            Ok(QueryRank {
                source: u,
                gold,
                rank: rank_of(&row, g),
                reachable: row[g] != T::neg_infinity(),
                coverage: scored.targets.len() as f64 / range.len().max(1) as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_ranks(ranks))
}
