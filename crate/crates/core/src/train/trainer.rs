use super::config::{TrainConfig, CLIP_NORM};
use super::eval::{evaluate, EvalReport};
use super::loss::pair_loss_var;
use crate::error::{Error, Result};
use crate::extract::{extract, LayeredAsg};
use crate::kg::{build_merged_graph, split_seeds, AlignedPair, AnchorSet, EntityId, KnowledgeGraph, MergedGraph, SeedSplit};
use crate::mm::{generate_modal_anchors, FeatureStore, ModalData};
use crate::model::{Mode, Model};
use crate::nn::{AdamConfig, AdamState, Gradients, ParamStore, Tape};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// One directional training query: score every candidate from `source` and
/// push `gold` up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub source: EntityId,
    pub gold: EntityId,
}

/// Both directions of each training pair.
pub fn directional_queries(pairs: &[AlignedPair]) -> Vec<Query> {
    pairs
        .iter()
        .flat_map(|p| {
            [
                Query { source: p.left_entity(), gold: p.right_entity() },
                Query { source: p.right_entity(), gold: p.left_entity() },
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean directional loss over queries whose gold was reachable.
    pub mean_loss: f64,
    pub queries: usize,
    /// Queries skipped because the gold entity was unreachable.
    pub skipped: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub anchors: usize,
    pub train_pairs: usize,
    pub modal_anchors: usize,
}

/// Summed gradients of a set of queries.
#[derive(Debug, Clone)]
pub struct BatchGradient<T> {
    pub grads: Gradients<T>,
    pub loss_sum: f64,
    pub used: usize,
    pub skipped: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Owns the model, optimizer, seed split and the anchor graph used for
/// training.
pub struct Trainer<'a, T: Scalar> {
    pub config: TrainConfig,
    pub model: Model<T>,
    adam: AdamState<T>,
    g1: &'a KnowledgeGraph,
    g2: &'a KnowledgeGraph,
    seeds: Vec<AlignedPair>,
    split: SeedSplit,
    modal_anchors: Vec<(EntityId, EntityId)>,
    graph: MergedGraph,
    modal: Option<ModalData<T>>,
    cache: HashMap<EntityId, LayeredAsg>,
    best: Option<(usize, f64, ParamStore<T>)>,
    history: Vec<EpochStats>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(
        config: TrainConfig,
        g1: &'a KnowledgeGraph,
        g2: &'a KnowledgeGraph,
        seeds: &[AlignedPair],
        features: Option<&FeatureStore>,
    ) -> Result<Self> {
        config.validate()?;
        let variant = config.variant;
        if variant.modal().is_some() && features.is_none() {
            return Err(Error::Config(format!("variant `{variant}` needs attribute features")));
        }
        let split = split_seeds(seeds, config.anchor_fraction, config.seed)?;
        let modal_anchors = match (config.modal_anchor_threshold, features) {
            (Some(tau), Some(store)) => {
                let existing = AnchorSet::from_aligned(seeds.iter());
                let all = generate_modal_anchors(store, g1, g2, tau, &existing, config.modal_anchor_fusion)?;
                // modal anchors never touch a training positive
                let positives: std::collections::HashSet<EntityId> =
                    split.train.iter().flat_map(|p| [p.left_entity(), p.right_entity()]).collect();
                all.into_iter()
                    .filter(|(a, b)| !positives.contains(a) && !positives.contains(b))
                    .collect()
            }
            (Some(_), None) => return Err(Error::Config("modal anchors need attribute features".into())),
            _ => Vec::new(),
        };
        let graph = Self::anchor_graph(g1, g2, &split.anchors, &modal_anchors)?;
        let modal = match (variant.modal(), features) {
            (Some(_), Some(store)) => Some(ModalData::build(&graph, g1, g2, store)?),
            _ => None,
        };
        let model = Model::new(
            config.model_config(),
            &graph,
            variant.modal().zip(modal.as_ref()),
            derive_seed(&[config.seed, 1]),
        )?;
        let adam = AdamState::new(
            &model.params,
            AdamConfig {
                lr: config.lr,
                weight_decay: config.weight_decay,
                ..AdamConfig::default()
            },
        );
        let mut trainer = Self {
            config,
            model,
            adam,
            g1,
            g2,
            seeds: seeds.to_vec(),
            split,
            modal_anchors,
            graph,
            modal,
            cache: HashMap::new(),
            best: None,
            history: Vec::new(),
        };
        if trainer.split.train.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        trainer.fill_cache()?;
        Ok(trainer)
    }

    fn anchor_graph(
        g1: &KnowledgeGraph,
        g2: &KnowledgeGraph,
        pairs: &[AlignedPair],
        extra: &[(EntityId, EntityId)],
    ) -> Result<MergedGraph> {
        let mut anchors = AnchorSet::from_aligned(pairs.iter());
        anchors.extend(extra.iter().copied());
        build_merged_graph(g1, g2, &anchors)
    }

    fn fill_cache(&mut self) -> Result<()> {
        let mut sources: Vec<EntityId> = directional_queries(&self.split.train).iter().map(|q| q.source).collect();
        sources.sort();
        sources.dedup();
        let (graph, depth, mode) = (&self.graph, self.config.depth, self.config.variant.extraction());
        let built = sources
            .par_iter()
            .map(|&s| Ok((s, extract(graph, s, depth, mode)?.with_self_loops(graph))))
            .collect::<Result<Vec<_>>>()?;
        self.cache = built.into_iter().collect();
        Ok(())
    }

    pub fn split(&self) -> &SeedSplit {
        &self.split
    }

    /// Graph with the training anchors (and modal anchors) installed.
    pub fn train_graph(&self) -> &MergedGraph {
        &self.graph
    }

    pub fn modal_data(&self) -> Option<&ModalData<T>> {
        self.modal.as_ref()
    }

    pub fn modal_anchors(&self) -> &[(EntityId, EntityId)] {
        &self.modal_anchors
    }

    /// Graph with every seed alignment (and modal anchor) as an anchor, as
    /// used at test time.
    pub fn eval_graph(&self) -> Result<MergedGraph> {
        Self::anchor_graph(self.g1, self.g2, &self.seeds, &self.modal_anchors)
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    /// Sum of the loss gradients of `queries`, computed in parallel and
    /// reduced in query order.
    pub fn batch_gradient(&self, queries: &[Query], dropout_seed: Option<u64>) -> Result<BatchGradient<T>> {
        let per_query = queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| {
                let asg = match self.cache.get(&q.source) {
                    Some(a) => std::borrow::Cow::Borrowed(a),
                    None => std::borrow::Cow::Owned(
                        extract(&self.graph, q.source, self.config.depth, self.config.variant.extraction())?
                            .with_self_loops(&self.graph),
                    ),
                };
                let mode = match dropout_seed {
                    Some(s) => Mode::Train { seed: derive_seed(&[s, i as u64]) },
                    None => Mode::Eval,
                };
                let mut tape = Tape::new(&self.model.params);
                let out = self.model.forward(&mut tape, &asg, self.modal.as_ref(), mode)?;
                let Some(pos) = out.position(self.graph.node(q.gold)) else {
                    return Ok(None);
                };
                let loss = pair_loss_var(&mut tape, out.scores, pos);
                let value = tape.value(loss).item().to_f64_lossy();
                Ok(Some((value, tape.backward(loss))))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grads = Gradients::zeros_like(&self.model.params);
        let (mut loss_sum, mut used, mut skipped) = (0.0, 0, 0);
        for r in per_query {
            match r {
                Some((l, g)) => {
                    grads.accumulate(&g);
                    loss_sum += l;
                    used += 1;
                }
                None => skipped += 1,
            }
        }
        Ok(BatchGradient {
            grads,
            loss_sum,
            used,
            skipped,
        })
    }

    /// One pass over both directions of every training pair.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.history.len() + 1;
        if self.config.resplit_each_epoch && epoch > 1 {
            let seed = derive_seed(&[self.config.seed, epoch as u64, 7]);
            self.split = split_seeds(&self.seeds, self.config.anchor_fraction, seed)?;
            self.graph = Self::anchor_graph(self.g1, self.g2, &self.split.anchors, &self.modal_anchors)?;
            self.fill_cache()?;
        }
        let mut queries = directional_queries(&self.split.train);
        queries.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[self.config.seed, epoch as u64, 3])));
        let (mut loss_sum, mut used, mut skipped, mut norm_sum, mut steps) = (0.0, 0, 0, 0.0, 0);
        for (step, batch) in queries.chunks(self.config.batch_size).enumerate() {
            let dropout_seed = (self.config.dropout > 0.0)
                .then(|| derive_seed(&[self.config.seed, epoch as u64, step as u64, 5]));
            let mut bg = self.batch_gradient(batch, dropout_seed)?;
            loss_sum += bg.loss_sum;
            used += bg.used;
            skipped += bg.skipped;
            if bg.used == 0 {
                continue;
            }
            bg.grads.scale(T::one() / T::from_f64_lossy(bg.used as f64));
            let norm = if self.config.grad_clip {
                bg.grads.clip_global_norm(T::from_f64_lossy(CLIP_NORM))
            } else {
                bg.grads.global_norm()
            };
            norm_sum += norm.to_f64_lossy();
            steps += 1;
            self.adam.step(&mut self.model.params, &bg.grads)?;
        }
        if used == 0 {
            return Err(Error::Data(format!(
                "no training pair is reachable within depth {} ({} queries skipped)",
                self.config.depth, skipped
            )));
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / used as f64,
            queries: queries.len(),
            skipped,
            grad_norm: norm_sum / steps.max(1) as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.5}, {} queries, {} skipped",
            stats.mean_loss,
            stats.queries,
            stats.skipped
        );
        if self.best.as_ref().is_none_or(|(_, l, _)| stats.mean_loss < *l) {
            self.best = Some((epoch, stats.mean_loss, self.model.params.clone()));
        }
        self.history.push(stats.clone());
        Ok(stats)
    }

    /// Runs the configured number of epochs and restores the parameters of
    /// the epoch with the lowest mean loss.
    pub fn train(&mut self) -> Result<TrainReport> {
        while self.history.len() < self.config.epochs {
            self.run_epoch()?;
        }
        let (best_epoch, best_loss, params) = self.best.clone().expect("at least one epoch ran");
        self.model.params = params;
        Ok(TrainReport {
            epochs: self.history.clone(),
            best_epoch,
            best_loss,
            anchors: self.split.anchors.len(),
            train_pairs: self.split.train.len(),
            modal_anchors: self.modal_anchors.len(),
        })
    }

    /// Evaluates the current parameters on `test` with all seeds as anchors.
    pub fn evaluate(&self, test: &[AlignedPair]) -> Result<EvalReport> {
        let graph = self.eval_graph()?;
        evaluate(&self.model, &graph, test, self.config.variant.extraction(), self.modal.as_ref())
    }
}
