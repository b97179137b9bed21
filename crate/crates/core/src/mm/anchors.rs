use super::FeatureStore;
use crate::error::{Error, Result};
use crate::kg::{AnchorSet, EntityId, KnowledgeGraph, Side};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Features an entity is represented by when proposing modal anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorFusion {
    /// Mean of the entity's `vision` rows.
    #[default]
    VisionOnly,
    /// Concatenation of the unit-normalized per-modality means.
    AllModalities,
}

fn entity_vectors(g: &KnowledgeGraph, store: &FeatureStore, fusion: AnchorFusion) -> Vec<Option<Vec<f64>>> {
    let modalities: Vec<usize> = match fusion {
        AnchorFusion::VisionOnly => store.modality("vision").into_iter().collect(),
        AnchorFusion::AllModalities => (0..store.matrices.len()).collect(),
    };
    let mut sums: Vec<Vec<(Vec<f64>, usize)>> = (0..g.num_entities())
        .map(|_| modalities.iter().map(|&m| (vec![0.0; store.matrices[m].dim], 0)).collect())
        .collect();
    for a in g.attribute_triples() {
        let Some((m, row)) = store.lookup(&a.value_key) else { continue };
        let Some(slot) = modalities.iter().position(|&x| x == m) else { continue };
        let (sum, n) = &mut sums[a.entity as usize][slot];
        for (s, &v) in sum.iter_mut().zip(store.matrices[m].row(row)) {
            *s += v as f64;
        }
        *n += 1;
    }
    sums.into_iter()
        .map(|parts| {
            if parts.iter().all(|(_, n)| *n == 0) {
                return None;
            }
            let mut out = Vec::new();
            for (sum, n) in parts {
                let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0 || norm == 0.0 {
                    out.extend(std::iter::repeat_n(0.0, sum.len()));
                } else {
                    out.extend(sum.iter().map(|v| v / norm));
                }
            }
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > 0.0).then(|| out.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Mutual nearest neighbours under cosine similarity with similarity `>= tau`,
/// excluding pairs already in `existing`. Ties go to the lower index. Pairs
/// are returned as (KG1 entity, KG2 entity), sorted.
pub fn generate_modal_anchors(
    store: &FeatureStore,
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
    tau: f64,
    existing: &AnchorSet,
    fusion: AnchorFusion,
) -> Result<Vec<(EntityId, EntityId)>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("modal anchor threshold {tau} outside (0, 1]")));
    }
    let (left, right) = if g1.side == Side::Kg1 { (g1, g2) } else { (g2, g1) };
    let a = entity_vectors(left, store, fusion);
    let b = entity_vectors(right, store, fusion);
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let best = |from: &[Option<Vec<f64>>], to: &[Option<Vec<f64>>]| -> Vec<Option<(usize, f64)>> {
        from.iter()
            .map(|x| {
                let x = x.as_ref()?;
                let mut top: Option<(usize, f64)> = None;
                for (j, y) in to.iter().enumerate() {
                    let Some(y) = y else { continue };
                    let s = dot(x, y);
                    if top.is_none_or(|(_, t)| s > t) {
                        top = Some((j, s));
                    }
                }
                top
            })
            .collect()
    };
    let ab = best(&a, &b);
    let ba = best(&b, &a);
    let known: HashSet<(EntityId, EntityId)> = existing
        .pairs()
        .iter()
        .map(|&(x, y)| if x.side == Side::Kg1 { (x, y) } else { (y, x) })
        .collect();
    // a tolerance keeps exactly identical vectors above tau = 1 despite rounding
    let eps = 1e-9;
    let mut out = Vec::new();
    for (i, hit) in ab.iter().enumerate() {
        let Some((j, s)) = *hit else { continue };
        if ba[j].map(|(k, _)| k) != Some(i) || s + eps < tau {
            continue;
        }
        let pair = (EntityId::new(Side::Kg1, i as u32), EntityId::new(Side::Kg2, j as u32));
        if !known.contains(&pair) {
            out.push(pair);
        }
    }
    Ok(out)
}
