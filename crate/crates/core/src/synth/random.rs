//! Unstructured random graph pairs, for property tests and benchmarks.

use crate::error::Result;
use crate::kg::{build_merged_graph, AnchorSet, EntityId, KnowledgeGraph, MergedGraph, Side};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomGraphSpec {
    pub entities_per_side: usize,
    pub relations: usize,
    pub triples_per_side: usize,
    pub anchors: usize,
}

impl Default for RandomGraphSpec {
    fn default() -> Self {
        Self {
            entities_per_side: 12,
            relations: 3,
            triples_per_side: 14,
            anchors: 3,
        }
    }
}

/// Builds two random graphs over `e0..eN` with relations `r0..rM` and joins
/// them with random one-to-one anchors.
pub fn random_graph_pair(spec: &RandomGraphSpec, seed: u64) -> Result<(KnowledgeGraph, KnowledgeGraph, AnchorSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.entities_per_side.max(1);
    let mut sides = Vec::with_capacity(2);
    for side in [Side::Kg1, Side::Kg2] {
        let mut g = KnowledgeGraph::new(side);
        for i in 0..n {
            g.entities.intern(&format!("e{i}"));
        }
        for r in 0..spec.relations.max(1) {
            g.relations.intern(&format!("r{r}"));
        }
        for _ in 0..spec.triples_per_side {
            let h = rng.gen_range(0..n) as u32;
            let t = rng.gen_range(0..n) as u32;
            let r = rng.gen_range(0..spec.relations.max(1)) as u32;
            g.add_triple_ids(h, r, t)?;
        }
        sides.push(g);
    }
    let g2 = sides.pop().unwrap();
    let g1 = sides.pop().unwrap();
    let mut left: Vec<u32> = (0..n as u32).collect();
    let mut right: Vec<u32> = (0..n as u32).collect();
    rand::seq::SliceRandom::shuffle(left.as_mut_slice(), &mut rng);
    rand::seq::SliceRandom::shuffle(right.as_mut_slice(), &mut rng);
    let anchors = left
        .iter()
        .zip(&right)
        .take(spec.anchors.min(n))
        .map(|(&l, &r)| (EntityId::new(Side::Kg1, l), EntityId::new(Side::Kg2, r)))
        .collect();
    Ok((g1, g2, AnchorSet::new(anchors)))
}

pub fn random_merged_graph(spec: &RandomGraphSpec, seed: u64) -> Result<MergedGraph> {
    let (g1, g2, a) = random_graph_pair(spec, seed)?;
    build_merged_graph(&g1, &g2, &a)
}
