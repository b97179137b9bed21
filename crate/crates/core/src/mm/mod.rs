//! Multi-modal attribute scoring: per-pair align attention over attribute
//! types, modality projections, the modal score head and modal anchors.

mod anchors;
mod features;

pub use anchors::{generate_modal_anchors, AnchorFusion};
pub use features::{FeatureMatrix, FeatureStore};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, MergedGraph};
use crate::model::Mlp;
use crate::nn::init::xavier_uniform;
use crate::nn::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which multi-modal scorer to attach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmVariant {
    /// Align attention over projected attribute values.
    Full,
    /// Align attention over attribute-type embeddings instead of values.
    NoValue,
    /// Projected values averaged uniformly, no align attention.
    NoAttention,
}

/// One attribute of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttrItem {
    /// Attribute type id, shared across both graphs by name.
    pub attr: u32,
    pub modality: u32,
    pub row: u32,
}

/// Attribute items for every merged-graph node plus the feature rows they
/// point to, converted to the model's scalar type.
#[derive(Debug, Clone)]
pub struct ModalData<T> {
    pub attr_names: Vec<String>,
    items: Vec<Vec<AttrItem>>,
    features: Vec<Tensor<T>>,
}

impl<T: Scalar> ModalData<T> {
    /// Resolves every attribute triple of `g1` and `g2` against `store`.
    pub fn build(graph: &MergedGraph, g1: &KnowledgeGraph, g2: &KnowledgeGraph, store: &FeatureStore) -> Result<Self> {
        let mut attr_names: Vec<String> = Vec::new();
        let mut attr_ids = std::collections::HashMap::new();
        let mut items = vec![Vec::new(); graph.num_nodes()];
        for g in [g1, g2] {
            let offset = graph.side_range(g.side).start;
            for a in g.attribute_triples() {
                let name = g.attributes.name(a.attr);
                let attr = *attr_ids.entry(name.to_owned()).or_insert_with(|| {
                    attr_names.push(name.to_owned());
                    attr_names.len() as u32 - 1
                });
                let (modality, row) = store.lookup(&a.value_key).ok_or_else(|| {
                    Error::Data(format!("unknown feature key `{}`", a.value_key))
                })?;
                items[(offset + a.entity) as usize].push(AttrItem {
                    attr,
                    modality: modality as u32,
                    row: row as u32,
                });
            }
        }
        let features = store
            .matrices
            .iter()
            .map(|m| {
                let data = (0..m.len()).flat_map(|i| m.row(i).iter().map(|&v| T::from_f64_lossy(v as f64))).collect();
                Tensor::matrix(m.len(), m.dim, data).expect("rows match dim")
            })
            .collect();
        Ok(Self {
            attr_names,
            items,
            features,
        })
    }

    /// Direct construction, mainly for tests.
    pub fn from_parts(attr_names: Vec<String>, items: Vec<Vec<AttrItem>>, features: Vec<Tensor<T>>) -> Result<Self> {
        for item in items.iter().flatten() {
            let Some(f) = features.get(item.modality as usize) else {
                return Err(Error::Data(format!("modality {} is not registered", item.modality)));
            };
            if item.row as usize >= f.rows() || item.attr as usize >= attr_names.len() {
                return Err(Error::Data(format!("attribute item {item:?} out of range")));
            }
        }
        Ok(Self {
            attr_names,
            items,
            features,
        })
    }

    pub fn items(&self, node: u32) -> &[AttrItem] {
        self.items.get(node as usize).map_or(&[], Vec::as_slice)
    }

    pub fn num_nodes(&self) -> usize {
        self.items.len()
    }

    pub fn modality_dims(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.cols()).collect()
    }

    pub fn feature_row(&self, modality: usize, row: usize) -> &[T] {
        self.features[modality].row_slice(row)
    }
}

/// Parameters of the multi-modal scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalHead {
    pub variant: MmVariant,
    /// Attribute-type embeddings, `num_attrs x dim`.
    pub types: ParamId,
    /// One `modality_dim x dim` projection per modality.
    pub projections: Vec<ParamId>,
    pub head: Mlp,
}

impl ModalHead {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        variant: MmVariant,
        data: &ModalData<T>,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let types = store.add("mm.types", xavier_uniform(data.attr_names.len().max(1), dim, rng))?;
        let projections = data
            .modality_dims()
            .into_iter()
            .enumerate()
            .map(|(i, md)| store.add(format!("mm.projection{i}"), xavier_uniform(md, dim, rng)))
            .collect::<Result<Vec<_>>>()?;
        let head = Mlp::register(store, "mm.score", dim, dim, 1, rng)?;
        Ok(Self {
            variant,
            types,
            projections,
            head,
        })
    }

    /// Projected value `W_m x` of one feature row, outside any tape.
    pub fn encode_attribute<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        store: &FeatureStore,
        key: &str,
    ) -> Result<Vec<T>> {
        let (m, row) = store
            .lookup(key)
            .ok_or_else(|| Error::Data(format!("unknown feature key `{key}`")))?;
        let proj = self
            .projections
            .get(m)
            .ok_or_else(|| Error::Data(format!("modality `{}` has no projection", store.matrices[m].modality)))?;
        let w = params.get(*proj);
        let feat = store.matrices[m].row(row);
        if w.rows() != feat.len() {
            return Err(Error::Shape(format!(
                "feature `{key}` has dimension {}, projection expects {}",
                feat.len(),
                w.rows()
            )));
        }
        let x = Tensor::row(feat.iter().map(|&v| T::from_f64_lossy(v as f64)).collect());
        Ok(crate::nn::tensor::matmul(&x, w).into_data())
    }

    /// Align-attention weights of `u`'s and `v`'s attributes for the pair
    /// `(u, v)`, computed without a tape.
    pub fn attention_weights<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        data: &ModalData<T>,
        u: u32,
        v: u32,
    ) -> (Vec<f64>, Vec<f64>) {
        let (iu, iv) = (data.items(u), data.items(v));
        let types = params.get(self.types);
        let unit = |a: u32| {
            let row: Vec<f64> = types.row_slice(a as usize).iter().map(|x| x.to_f64_lossy()).collect();
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            row.into_iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let sim = |a: u32, b: u32| unit(a).iter().zip(unit(b)).map(|(x, y)| x * y).sum::<f64>();
        if self.variant == MmVariant::NoAttention {
            return (
                vec![1.0 / iu.len() as f64; iu.len()],
                vec![1.0 / iv.len() as f64; iv.len()],
            );
        }
        let softmax = |xs: Vec<f64>| {
            let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
            let t: f64 = e.iter().sum();
            e.into_iter().map(|x| x / t).collect::<Vec<_>>()
        };
        let wu = softmax(iu.iter().map(|a| iv.iter().map(|b| sim(a.attr, b.attr)).sum()).collect());
        let wv = softmax(iv.iter().map(|b| iu.iter().map(|a| sim(a.attr, b.attr)).sum()).collect());
        (wu, wv)
    }

    /// Value vectors for a list of items (`items.len() x dim`).
    fn values<T: Scalar>(&self, tape: &mut Tape<'_, T>, data: &ModalData<T>, items: &[AttrItem]) -> Var {
        if self.variant == MmVariant::NoValue {
            let types = tape.param(self.types);
            let idx: Vec<usize> = items.iter().map(|i| i.attr as usize).collect();
            return tape.gather_rows(types, &idx);
        }
        let mut total: Option<Var> = None;
        for (m, &proj) in self.projections.iter().enumerate() {
            let pos: Vec<usize> = (0..items.len()).filter(|&k| items[k].modality as usize == m).collect();
            if pos.is_empty() {
                continue;
            }
            let md = data.features[m].cols();
            let mut rows = Vec::with_capacity(pos.len() * md);
            for &k in &pos {
                rows.extend_from_slice(data.feature_row(m, items[k].row as usize));
            }
            let x = tape.constant(Tensor::matrix(pos.len(), md, rows).expect("shape computed"));
            let w = tape.param(proj);
            let projected = tape.matmul(x, w);
            let placed = tape.scatter_add_rows(projected, &pos, items.len());
            total = Some(match total {
                Some(t) => tape.add(t, placed),
                None => placed,
            });
        }
        total.expect("items are non-empty")
    }

    fn normalized_types<T: Scalar>(&self, tape: &mut Tape<'_, T>, items: &[AttrItem]) -> Var {
        let types = tape.param(self.types);
        let idx: Vec<usize> = items.iter().map(|i| i.attr as usize).collect();
        let t = tape.gather_rows(types, &idx);
        tape.row_normalize(t)
    }

    /// `score_m(source, c)` for every candidate `c`, as a `candidates x 1`
    /// column. Candidates (or a source) without attributes score 0.
    pub fn score<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        data: &ModalData<T>,
        source: u32,
        candidates: &[u32],
    ) -> Result<Var> {
        let r = candidates.len();
        let src = data.items(source);
        let mut cand_items = Vec::new();
        let mut seg = Vec::new();
        let mut mask = vec![T::zero(); r];
        let mut count = vec![0usize; r];
        for (c, &node) in candidates.iter().enumerate() {
            let items = data.items(node);
            if !items.is_empty() && !src.is_empty() {
                mask[c] = T::one();
            }
            count[c] = items.len();
            cand_items.extend_from_slice(items);
            seg.extend(std::iter::repeat_n(c, items.len()));
        }
        if src.is_empty() || cand_items.is_empty() {
            return Ok(tape.constant(Tensor::zeros(&[r, 1])));
        }
        let p = src.len();
        let v_u = self.values(tape, data, src);
        let v_c = self.values(tape, data, &cand_items);
        let (h_u, h_v) = match self.variant {
            MmVariant::Full | MmVariant::NoValue => {
                let t_u = self.normalized_types(tape, src);
                let t_c = self.normalized_types(tape, &cand_items);
                let sim = tape.matmul_nt(t_c, t_u);
                // weights of each candidate's own attributes
                let ones = tape.constant(Tensor::full(&[p, 1], T::one()));
                let totals = tape.matmul(sim, ones);
                let beta = tape.segment_softmax(totals, &seg);
                let weighted = tape.mul_col(v_c, beta);
                let h_v = tape.scatter_add_rows(weighted, &seg, r);
                // weights of the source's attributes, per candidate
                let per_cand = tape.scatter_add_rows(sim, &seg, r);
                let alpha = tape.softmax_rows(per_cand);
                let h_u = tape.matmul(alpha, v_u);
                (h_u, h_v)
            }
            MmVariant::NoAttention => {
                let mean = tape.constant(Tensor::full(&[1, p], T::one() / T::from_f64_lossy(p as f64)));
                let h_u = tape.matmul(mean, v_u);
                let h_u = tape.gather_rows(h_u, &vec![0; r]);
                let w: Vec<T> = seg.iter().map(|&c| T::one() / T::from_f64_lossy(count[c] as f64)).collect();
                let w = tape.constant(Tensor::column(w));
                let weighted = tape.mul_col(v_c, w);
                let h_v = tape.scatter_add_rows(weighted, &seg, r);
                (h_u, h_v)
            }
        };
        let joint = tape.mul(h_u, h_v);
        let s = self.head.apply(tape, joint);
        let mask = tape.constant(Tensor::column(mask));
        Ok(tape.mul_col(s, mask))
    }
}

/// `score_g + score_m`; `-inf` absorbs.
pub fn combined_score<T: Scalar>(score_g: T, score_m: T) -> T {
    if score_g == T::neg_infinity() {
        score_g
    } else {
        score_g + score_m
    }
}

#[cfg(test)]
mod tests;
