//! Path-based message passing over layered align-subgraphs.

use crate::error::{Error, Result};
use crate::extract::{extract, ExtractionMode, LayeredAsg};
use crate::kg::{Edge, EntityId, MergedGraph};
use crate::mm::{ModalData, ModalHead, MmVariant};
use crate::nn::init::xavier_uniform;
use crate::nn::{GruCell, ParamId, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;


/// How per-edge attention logits become weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    /// Independent gate per edge.
    #[default]
    Sigmoid,
    /// Normalized over the in-edges of each node within a layer.
    Softmax,
}

impl std::str::FromStr for AttentionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Self::Sigmoid),
            "softmax" => Ok(Self::Softmax),
            _ => Err(Error::Config(format!("unknown attention kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub kg_dim: usize,
    pub kg_out_dim: usize,
    pub depth: usize,
    pub attention: AttentionKind,
    /// Dropout on MLP inputs during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            kg_dim: 8,
            kg_out_dim: 8,
            depth: 5,
            attention: AttentionKind::Sigmoid,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.kg_dim == 0 || self.kg_out_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Two-layer perceptron `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            w1: store.add(format!("{prefix}.w1"), xavier_uniform(input, hidden, rng))?,
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(&[1, hidden]))?,
            w2: store.add(format!("{prefix}.w2"), xavier_uniform(hidden, output, rng))?,
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(&[1, output]))?,
        })
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let (w1, b1, w2, b2) = (tape.param(self.w1), tape.param(self.b1), tape.param(self.w2), tape.param(self.b2));
        let h = tape.matmul(x, w1);
        let h = tape.add_row(h, b1);
        let h = tape.relu(h);
        let o = tape.matmul(h, w2);
        tape.add_row(o, b2)
    }
}

/// Parameter handles of the structural model.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Per-layer relation embeddings, `num_relations x dim`.
    pub relations: Vec<ParamId>,
    /// Per-layer attention MLPs over `h ‖ r ‖ f_g`.
    pub attention: Vec<Mlp>,
    /// Per-layer message transforms, `dim x dim`.
    pub transform: Vec<ParamId>,
    /// Entity embeddings for the graph-knowledge feature, `num_nodes x kg_dim`.
    pub entity: ParamId,
    pub kg_w: ParamId,
    pub kg_b: ParamId,
    pub gru: GruCell,
    pub score: Mlp,
}

/// Structural model plus an optional multi-modal head, with all parameters in
/// one store.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub layout: Layout,
    pub modal: Option<ModalHead>,
    num_nodes: usize,
    num_relations: usize,
}

/// Whether dropout is active; training carries the mask seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Output of a forward pass for one source.
#[derive(Debug, Clone)]
pub struct QueryScores {
    /// Opposite-side nodes holding a final state, sorted.
    pub targets: Vec<u32>,
    /// `targets.len() x 1` combined scores.
    pub scores: Var,
    /// Structural part of `scores`.
    pub structural: Var,
    /// Per-layer `edges x 1` attention aligned with the padded ASG layers.
    pub attention: Vec<Var>,
}

impl QueryScores {
    pub fn position(&self, node: u32) -> Option<usize> {
        self.targets.binary_search(&node).ok()
    }
}

/// Eval-mode scores of one source, with the padded ASG they came from.
#[derive(Debug, Clone)]
pub struct SourceScores<T> {
    pub targets: Vec<u32>,
    pub scores: Vec<T>,
    pub attention: EdgeAttention,
    pub asg: LayeredAsg,
}

impl<T: Scalar> SourceScores<T> {
    pub fn score_of(&self, node: u32) -> Option<T> {
        self.targets.binary_search(&node).ok().map(|i| self.scores[i])
    }
}

/// Attention weight of every edge in a padded ASG, by layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttention {
    pub layers: Vec<Vec<(Edge, f64)>>,
}

impl EdgeAttention {
    pub fn from_forward<T: Scalar>(tape: &Tape<'_, T>, asg: &LayeredAsg, out: &QueryScores) -> Self {
        let layers = asg
            .layers
            .iter()
            .zip(&out.attention)
            .map(|(edges, &a)| {
                edges
                    .iter()
                    .zip(tape.value(a).data())
                    .map(|(&e, &w)| (e, w.to_f64_lossy()))
                    .collect()
            })
            .collect();
        Self { layers }
    }

    pub fn get(&self, layer: usize, edge: &Edge) -> Option<f64> {
        let l = self.layers.get(layer)?;
        l.binary_search_by(|(e, _)| e.cmp(edge)).ok().map(|i| l[i].1)
    }
}

impl<T: Scalar> Model<T> {
    /// Fresh model sized for `graph`. `modal` attaches a multi-modal head.
    pub fn new(
        config: ModelConfig,
        graph: &MergedGraph,
        modal: Option<(MmVariant, &ModalData<T>)>,
        seed: u64,
    ) -> Result<Self> {
        Self::with_sizes(config, graph.num_nodes(), graph.num_relations(), modal, seed)
    }

    pub fn with_sizes(
        config: ModelConfig,
        num_nodes: usize,
        num_relations: usize,
        modal: Option<(MmVariant, &ModalData<T>)>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.dim;
        let mut relations = Vec::new();
        let mut attention = Vec::new();
        let mut transform = Vec::new();
        for l in 0..config.depth {
            relations.push(store.add(format!("layer{l}.relations"), xavier_uniform(num_relations, d, &mut rng))?);
            attention.push(Mlp::register(
                &mut store,
                &format!("layer{l}.attention"),
                2 * d + config.kg_out_dim,
                d,
                1,
                &mut rng,
            )?);
            transform.push(store.add(format!("layer{l}.transform"), xavier_uniform(d, d, &mut rng))?);
        }
        let entity = store.add("kg.entity", xavier_uniform(num_nodes, config.kg_dim, &mut rng))?;
        let kg_w = store.add("kg.w", xavier_uniform(2 * config.kg_dim, config.kg_out_dim, &mut rng))?;
        let kg_b = store.add("kg.b", Tensor::zeros(&[1, config.kg_out_dim]))?;
        let gru = GruCell::register(&mut store, "gru", d, &mut rng)?;
        let score = Mlp::register(&mut store, "score_g", d, d, 1, &mut rng)?;
        let modal = match modal {
            Some((variant, data)) => Some(ModalHead::register(&mut store, variant, data, d, &mut rng)?),
            None => None,
        };
        Ok(Self {
            config,
            params: store,
            layout: Layout {
                relations,
                attention,
                transform,
                entity,
                kg_w,
                kg_b,
                gru,
                score,
            },
            modal,
            num_nodes,
            num_relations,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    /// Checks that the model was built for a graph of this shape.
    pub fn check_graph(&self, graph: &MergedGraph) -> Result<()> {
        if graph.num_nodes() != self.num_nodes || graph.num_relations() != self.num_relations {
            return Err(Error::Data(format!(
                "model expects {} nodes and {} relations, graph has {} and {}",
                self.num_nodes,
                self.num_relations,
                graph.num_nodes(),
                graph.num_relations()
            )));
        }
        Ok(())
    }

    /// Structural (and, when configured, multi-modal) scores for every
    /// scorable target of a padded ASG.
    pub fn forward(
        &self,
        tape: &mut Tape<'_, T>,
        asg: &LayeredAsg,
        modal: Option<&ModalData<T>>,
        mode: Mode,
    ) -> Result<QueryScores> {
        if asg.depth != self.config.depth || asg.layers.len() != self.config.depth {
            return Err(Error::Precondition(format!(
                "ASG depth {} does not match model depth {}",
                asg.depth, self.config.depth
            )));
        }
        if asg.self_loop.is_none() {
            return Err(Error::Precondition("ASG must be padded with self-loops before scoring".into()));
        }
        let mut rng = match mode {
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Mode::Eval => None,
        };
        let rate = self.config.dropout;
        let d = self.config.dim;

        // local indexing: source first, then every tail in order of appearance
        let mut local: HashMap<u32, usize> = HashMap::new();
        let mut nodes = vec![asg.source];
        local.insert(asg.source, 0);
        for layer in &asg.layers {
            for e in layer {
                if e.head as usize >= self.num_nodes || e.rel as usize >= self.num_relations {
                    return Err(Error::Precondition(format!("edge {e:?} is outside the model's graph")));
                }
                local.entry(e.tail).or_insert_with(|| {
                    nodes.push(e.tail);
                    nodes.len() - 1
                });
            }
        }
        let n = nodes.len();
        let global: Vec<usize> = nodes.iter().map(|&x| x as usize).collect();
        let emb = tape.param(self.layout.entity);
        let emb_local = tape.gather_rows(emb, &global);
        let kg_w = tape.param(self.layout.kg_w);
        let kg_b = tape.param(self.layout.kg_b);

        let mut h = tape.constant(Tensor::zeros(&[n, d]));
        let mut has_state = vec![false; n];
        has_state[0] = true;
        let mut attention = Vec::with_capacity(asg.depth);
        for (l, layer) in asg.layers.iter().enumerate() {
            let mut heads = Vec::with_capacity(layer.len());
            let mut tails = Vec::with_capacity(layer.len());
            let mut rels = Vec::with_capacity(layer.len());
            for e in layer {
                let hd = *local.get(&e.head).ok_or_else(|| {
                    Error::Precondition(format!("edge {e:?} in layer {} starts outside the ASG", l + 1))
                })?;
                if !has_state[hd] {
                    return Err(Error::Precondition(format!(
                        "edge {e:?} in layer {} starts at a node without a state",
                        l + 1
                    )));
                }
                heads.push(hd);
                tails.push(local[&e.tail]);
                rels.push(e.rel as usize);
            }
            if layer.is_empty() {
                has_state.iter_mut().for_each(|s| *s = false);
                h = tape.constant(Tensor::zeros(&[n, d]));
                attention.push(tape.constant(Tensor::zeros(&[0, 1])));
                continue;
            }
            // receiving nodes in local order
            let mut recv_of = vec![usize::MAX; n];
            let mut recv = Vec::new();
            for &t in &tails {
                if recv_of[t] == usize::MAX {
                    recv_of[t] = recv.len();
                    recv.push(t);
                }
            }
            let tails_recv: Vec<usize> = tails.iter().map(|&t| recv_of[t]).collect();

            let hh = tape.gather_rows(h, &heads);
            let rel_table = tape.param(self.layout.relations[l]);
            let rr = tape.gather_rows(rel_table, &rels);
            let eh = tape.gather_rows(emb_local, &heads);
            let et = tape.gather_rows(emb_local, &tails);
            let pair = tape.concat_cols(&[eh, et]);
            let fg = tape.matmul(pair, kg_w);
            let fg = tape.add_row(fg, kg_b);
            let fg = tape.relu(fg);
            let att_in = tape.concat_cols(&[hh, rr, fg]);
            let att_in = self.dropout(tape, att_in, rate, &mut rng)?;
            let logit = self.layout.attention[l].apply(tape, att_in);
            let alpha = match self.config.attention {
                AttentionKind::Sigmoid => tape.sigmoid(logit),
                AttentionKind::Softmax => tape.segment_softmax(logit, &tails),
            };
            attention.push(alpha);
            let msg = tape.add(hh, rr);
            let msg = tape.mul_col(msg, alpha);
            let agg = tape.scatter_add_rows(msg, &tails_recv, recv.len());
            let w = tape.param(self.layout.transform[l]);
            let x = tape.matmul(agg, w);
            let h_prev = tape.gather_rows(h, &recv);
            let h_new = self.layout.gru.step(tape, h_prev, x)?;
            h = tape.scatter_add_rows(h_new, &recv, n);
            has_state.iter_mut().for_each(|s| *s = false);
            for &r in &recv {
                has_state[r] = true;
            }
        }

        let targets: Vec<u32> = asg
            .targets
            .iter()
            .copied()
            .filter(|t| local.get(t).is_some_and(|&i| has_state[i]))
            .collect();
        let rows: Vec<usize> = targets.iter().map(|t| local[t]).collect();
        let final_h = tape.gather_rows(h, &rows);
        let final_h = self.dropout(tape, final_h, rate, &mut rng)?;
        let structural = self.layout.score.apply(tape, final_h);
        let scores = match (&self.modal, modal) {
            (Some(head), Some(data)) => {
                let sm = head.score(tape, data, asg.source, &targets)?;
                tape.add(structural, sm)
            }
            (Some(_), None) => {
                return Err(Error::Precondition("model has a multi-modal head but no features were given".into()))
            }
            (None, _) => structural,
        };
        Ok(QueryScores {
            targets,
            scores,
            structural,
            attention,
        })
    }

    /// Extracts, pads and scores the align-subgraph of `source` in eval mode.
    pub fn score_source(
        &self,
        graph: &MergedGraph,
        source: EntityId,
        extraction: ExtractionMode,
        modal: Option<&ModalData<T>>,
    ) -> Result<SourceScores<T>> {
        self.check_graph(graph)?;
        let asg = extract(graph, source, self.config.depth, extraction)?.with_self_loops(graph);
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, &asg, modal, Mode::Eval)?;
        let scores = tape.value(out.scores).data().to_vec();
        let attention = EdgeAttention::from_forward(&tape, &asg, &out);
        Ok(SourceScores {
            targets: out.targets,
            scores,
            attention,
            asg,
        })
    }

    /// One row per source over every entity of the opposite graph (in id
    /// order); unreachable candidates hold `-inf`.
    pub fn score_pairs(
        &self,
        graph: &MergedGraph,
        sources: &[EntityId],
        extraction: ExtractionMode,
        modal: Option<&ModalData<T>>,
    ) -> Result<Vec<Vec<T>>> {
        sources
            .par_iter()
            .map(|&u| {
                let scored = self.score_source(graph, u, extraction, modal)?;
                let range = graph.side_range(u.side.opposite());
                let mut row = vec![T::neg_infinity(); range.len()];
                for (&t, &s) in scored.targets.iter().zip(&scored.scores) {
                    row[(t - range.start) as usize] = s;
                }
                Ok(row)
            })
            .collect()
    }

    fn dropout(&self, tape: &mut Tape<'_, T>, x: Var, rate: f64, rng: &mut Option<ChaCha8Rng>) -> Result<Var> {
        match rng {
            Some(rng) => tape.dropout(x, rate, true, rng),
            None => Ok(x),
        }
    }
}
