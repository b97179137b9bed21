//! Paired graphs with planted alignment rules.

use crate::error::{Error, Result};
use crate::kg::{AlignedPair, Dataset, KnowledgeGraph, Side};
use crate::mm::{FeatureMatrix, FeatureStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

/// Shape of a planted rule: relation chains on each side of one anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuleTemplate {
    /// `r(X, A) ∧ anchor(A, B) ∧ r(Y, B)`.
    OneHop,
    /// `k` relations on each side.
    Symmetric { k: usize },
    /// `k1` relations in the first graph, `k2` in the second.
    Asymmetric { k1: usize, k2: usize },
}

impl RuleTemplate {
    /// Chain lengths (first graph, second graph).
    pub fn side_lengths(self) -> (usize, usize) {
        match self {
            Self::OneHop => (1, 1),
            Self::Symmetric { k } => (k, k),
            Self::Asymmetric { k1, k2 } => (k1, k2),
        }
    }

    /// Path length from one aligned entity to the other.
    pub fn length(self) -> usize {
        let (p, q) = self.side_lengths();
        p + q + 1
    }

    pub fn label(self) -> String {
        match self {
            Self::OneHop => "one-hop".into(),
            Self::Symmetric { k } => format!("symmetric-{k}"),
            Self::Asymmetric { k1, k2 } => format!("asymmetric-{k1}:{k2}"),
        }
    }

    fn validate(self) -> Result<()> {
        let (p, q) = self.side_lengths();
        if !(1..=3).contains(&p) || !(1..=3).contains(&q) {
            return Err(Error::Config(format!("rule template {} needs chain lengths in 1..=3", self.label())));
        }
        Ok(())
    }
}

/// Pairs sharing one anchor through the same relation, so structure alone
/// cannot tell them apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoySpec {
    /// Share of gold pairs planted this way instead of with a rule.
    pub fraction: f64,
    pub group_size: usize,
}

/// Random attribute features: one shared `image` attribute per entity whose
/// vectors agree across a gold pair up to noise, plus side-specific
/// distractor attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub dim: usize,
    /// Noise amplitude added to the shared latent vector.
    pub noise: f64,
    pub distractors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub entities_per_side: usize,
    /// Relation vocabulary `r0..rN`; templates take the first names.
    pub relations: usize,
    pub templates: Vec<RuleTemplate>,
    /// Rule instances planted per gold pair, each through its own anchor.
    pub instances_per_pair: usize,
    /// Random same-side edges per graph.
    pub noise_edges: usize,
    /// Share of gold pairs given out as seed alignments.
    pub seed_ratio: f64,
    pub seed: u64,
    /// Wrong seed alignments added as extra anchors.
    pub cross_side_noise: usize,
    pub decoy: Option<DecoySpec>,
    pub attributes: Option<AttributeSpec>,
    /// Tries per planted structure before giving up.
    pub max_attempts: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            entities_per_side: 500,
            relations: 8,
            templates: vec![
                RuleTemplate::OneHop,
                RuleTemplate::Symmetric { k: 2 },
                RuleTemplate::Asymmetric { k1: 1, k2: 2 },
            ],
            instances_per_pair: 1,
            noise_edges: 300,
            seed_ratio: 0.3,
            seed: 0,
            cross_side_noise: 0,
            decoy: None,
            attributes: None,
            max_attempts: 500,
        }
    }
}

/// Relation chains of one planted rule, by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub template: RuleTemplate,
    /// Relations from the first-graph entity towards the anchor.
    pub source_relations: Vec<String>,
    /// Relations from the second-graph entity towards the anchor.
    pub target_relations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedInstance {
    pub pair: AlignedPair,
    /// Index into the rule list; `None` for decoys.
    pub rule: Option<usize>,
    pub anchor: AlignedPair,
    pub length: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    pub rejected_instances: usize,
    pub rejected_noise: usize,
    pub noise_edges: usize,
    pub unplanted_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub rules: Vec<PlantedRule>,
    pub instances: Vec<PlantedInstance>,
    pub features: Option<FeatureStore>,
    pub stats: SynthStats,
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a SynthSpec,
    rules: &'a [PlantedRule],
    instances: &'a [PlantedInstance],
    stats: &'a SynthStats,
}

pub const RULES_FILE: &str = "rules.json";

impl SynthDataset {
    /// Standard dataset layout plus `rules.json` and, with attributes,
    /// `vision.bin`/`vision.json` and `text.bin`/`text.json`.
    pub fn write(&self, spec: &SynthSpec, dir: &Path) -> Result<()> {
        self.dataset.save(dir)?;
        let manifest = Manifest {
            spec,
            rules: &self.rules,
            instances: &self.instances,
            stats: &self.stats,
        };
        crate::kg::write_file(&dir.join(RULES_FILE), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        if let Some(store) = &self.features {
            for m in &store.matrices {
                m.write(&dir.join(format!("{}.bin", m.modality)), &dir.join(format!("{}.json", m.modality)))?;
            }
        }
        Ok(())
    }

    /// Planted path length of a gold pair (shortest over its instances).
    pub fn planted_length(&self, pair: AlignedPair) -> Option<usize> {
        self.instances.iter().filter(|i| i.pair == pair).map(|i| i.length).min()
    }
}

/// Adjacency of one side, relations by vocabulary index.
#[derive(Clone)]
struct SideGraph {
    out: Vec<Vec<(usize, u32)>>,
    inn: Vec<Vec<(usize, u32)>>,
    edges: HashSet<(u32, usize, u32)>,
}

impl SideGraph {
    fn new(n: usize) -> Self {
        Self {
            out: vec![Vec::new(); n],
            inn: vec![Vec::new(); n],
            edges: HashSet::new(),
        }
    }

    fn insert(&mut self, h: u32, r: usize, t: u32) -> bool {
        if !self.edges.insert((h, r, t)) {
            return false;
        }
        self.out[h as usize].push((r, t));
        self.inn[t as usize].push((r, h));
        true
    }

    fn remove(&mut self, h: u32, r: usize, t: u32) {
        self.edges.remove(&(h, r, t));
        self.out[h as usize].retain(|&e| e != (r, t));
        self.inn[t as usize].retain(|&e| e != (r, h));
    }

    /// Nodes `x` with a walk `x -chain[0]-> ... -chain[last]-> end`.
    fn back(&self, end: u32, chain: &[usize]) -> Vec<u32> {
        let mut cur = vec![end];
        for &r in chain.iter().rev() {
            let mut next: Vec<u32> = cur
                .iter()
                .flat_map(|&y| self.inn[y as usize].iter().filter(|e| e.0 == r).map(|e| e.1))
                .collect();
            next.sort_unstable();
            next.dedup();
            cur = next;
        }
        cur
    }

    /// Nodes reached from `start` by following `chain`.
    fn forward(&self, start: u32, chain: &[usize]) -> Vec<u32> {
        let mut cur = vec![start];
        for &r in chain {
            let mut next: Vec<u32> = cur
                .iter()
                .flat_map(|&x| self.out[x as usize].iter().filter(|e| e.0 == r).map(|e| e.1))
                .collect();
            next.sort_unstable();
            next.dedup();
            cur = next;
        }
        cur
    }
}

struct State {
    n: usize,
    sides: [SideGraph; 2],
    /// Anchor partners per side.
    partners: [Vec<Vec<u32>>; 2],
    /// gold[0][i] = KG2 partner of KG1 entity i.
    gold: [Vec<u32>; 2],
    /// Rule chains by relation index: (first graph, second graph).
    chains: Vec<[Vec<usize>; 2]>,
    /// Planted length per KG1 entity for test pairs.
    required: Vec<Option<usize>>,
    radius: usize,
}

type NewEdge = (usize, u32, usize, u32);

impl State {
    fn is_gold(&self, side: usize, x: u32, y: u32) -> bool {
        self.gold[side][x as usize] == y
    }

    /// Whether an edge completes a rule instance for a non-gold pair.
    fn spurious(&self, side: usize, h: u32, r: usize, t: u32) -> bool {
        let other = 1 - side;
        for chain in &self.chains {
            let mine = &chain[side];
            for j in (0..mine.len()).filter(|&j| mine[j] == r) {
                let xs = self.sides[side].back(h, &mine[..j]);
                if xs.is_empty() {
                    continue;
                }
                for a in self.sides[side].forward(t, &mine[j + 1..]) {
                    for &b in &self.partners[side][a as usize] {
                        for y in self.sides[other].back(b, &chain[other]) {
                            if xs.iter().any(|&x| !self.is_gold(side, x, y)) {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    /// Undirected distances from a global node (`side * n + index`).
    fn bfs(&self, start: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; 2 * self.n];
        dist[start] = 0;
        let mut frontier = vec![start];
        for d in 1..=self.radius as u32 {
            let mut next = Vec::new();
            for &g in &frontier {
                let (s, i) = (g / self.n, g % self.n);
                let sg = &self.sides[s];
                let nbrs = sg.out[i]
                    .iter()
                    .chain(&sg.inn[i])
                    .map(|e| s * self.n + e.1 as usize)
                    .chain(self.partners[s][i].iter().map(|&p| (1 - s) * self.n + p as usize));
                for x in nbrs {
                    if dist[x] == u32::MAX {
                        dist[x] = d;
                        next.push(x);
                    }
                }
            }
            frontier = next;
        }
        dist
    }

    /// Whether some test pair now has a path shorter than its planted length.
    fn shortcut(&self, added: &[NewEdge]) -> bool {
        for &(sh, h, st, t) in added {
            let dh = self.bfs(sh * self.n + h as usize);
            let dt = self.bfs(st * self.n + t as usize);
            for (u, need) in self.required.iter().enumerate() {
                let Some(need) = *need else { continue };
                let v = self.n + self.gold[0][u] as usize;
                let via = |a: &[u32], b: &[u32]| a[u].saturating_add(1).saturating_add(b[v]);
                if via(&dh, &dt).min(via(&dt, &dh)) < need as u32 {
                    return true;
                }
            }
        }
        false
    }

    /// Adds same-side edges; rolls back and returns false if they create a
    /// spurious rule instance or a shortcut.
    fn try_add(&mut self, edges: &[(usize, u32, usize, u32)], check_rules: bool) -> bool {
        let mut added = Vec::new();
        for &(s, h, r, t) in edges {
            if self.sides[s].insert(h, r, t) {
                added.push((s, h, r, t));
            }
        }
        let bad = (check_rules && added.iter().any(|&(s, h, r, t)| self.spurious(s, h, r, t)))
            || self.shortcut(&added.iter().map(|&(s, h, _, t)| (s, h, s, t)).collect::<Vec<_>>());
        if bad {
            for &(s, h, r, t) in &added {
                self.sides[s].remove(h, r, t);
            }
        }
        !bad
    }
}

enum Plan {
    Rule(usize),
    Decoy,
}

/// Generates two graphs over `e{i}` entities with gold alignments, planted
/// rule instances through seed anchors, and random noise edges that create
/// no spurious rule instance and no shortcut for any test pair.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    let n = spec.entities_per_side;
    if n < 4 {
        return Err(Error::Config("need at least 4 entities per side".into()));
    }
    if spec.templates.is_empty() && spec.decoy.is_none() {
        return Err(Error::Config("the spec plants no rules".into()));
    }
    if !(spec.seed_ratio > 0.0 && spec.seed_ratio < 1.0) {
        return Err(Error::Config(format!("seed ratio {} outside (0, 1)", spec.seed_ratio)));
    }
    if spec.instances_per_pair == 0 {
        return Err(Error::Config("instances_per_pair must be at least 1".into()));
    }
    for t in &spec.templates {
        t.validate()?;
    }
    if let Some(d) = spec.decoy {
        if !(0.0..=1.0).contains(&d.fraction) || d.group_size < 2 {
            return Err(Error::Config("decoys need a fraction in [0, 1] and groups of at least 2".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // relation names: templates first, then the decoy relation, then noise
    let mut next_rel = 0;
    let mut chains = Vec::new();
    let mut rules = Vec::new();
    for &t in &spec.templates {
        let (p, q) = t.side_lengths();
        let first: Vec<usize> = (next_rel..next_rel + p).collect();
        let second: Vec<usize> = match t {
            RuleTemplate::Asymmetric { .. } => (next_rel + p..next_rel + p + q).collect(),
            _ => first.clone(),
        };
        next_rel = 1 + *first.iter().chain(&second).max().expect("chains are non-empty");
        let name = |c: &[usize]| c.iter().map(|r| format!("r{r}")).collect::<Vec<_>>();
        rules.push(PlantedRule {
            template: t,
            source_relations: name(&first),
            target_relations: name(&second),
        });
        chains.push([first, second]);
    }
    let decoy_rel = spec.decoy.map(|_| {
        next_rel += 1;
        next_rel - 1
    });
    if next_rel > spec.relations {
        return Err(Error::Config(format!(
            "templates need {next_rel} relations, vocabulary has {}",
            spec.relations
        )));
    }

    // gold bijection and seed choice
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(&mut rng);
    let mut inverse = vec![0u32; n];
    for (i, &j) in perm.iter().enumerate() {
        inverse[j as usize] = i as u32;
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut rng);
    let n_seeds = ((n as f64 * spec.seed_ratio).round() as usize).clamp(1, n - 1);
    let (seed_left, test_left) = order.split_at(n_seeds);
    let pair = |i: u32| AlignedPair::new(i, perm[i as usize]);

    let mut partners = [vec![Vec::new(); n], vec![Vec::new(); n]];
    let mut anchors: Vec<AlignedPair> = seed_left.iter().map(|&i| pair(i)).collect();
    let mut noisy = Vec::new();
    while noisy.len() < spec.cross_side_noise {
        let (a, b) = (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32));
        let p = AlignedPair::new(a, b);
        if perm[a as usize] != b && !noisy.contains(&p) {
            noisy.push(p);
        }
    }
    anchors.extend(&noisy);
    for p in &anchors {
        partners[0][p.left as usize].push(p.right);
        partners[1][p.right as usize].push(p.left);
    }

    let max_len = spec
        .templates
        .iter()
        .map(|t| t.length())
        .chain(spec.decoy.map(|_| 3))
        .max()
        .unwrap_or(3);
    let mut st = State {
        n,
        sides: [SideGraph::new(n), SideGraph::new(n)],
        partners,
        gold: [perm.clone(), inverse],
        chains,
        required: vec![None; n],
        radius: max_len - 1,
    };

    // plans: test pairs first so they get anchor capacity before seeds
    let mut plans: Vec<(u32, Plan)> = Vec::new();
    let mut decoys = Vec::new();
    let mut counter = 0usize;
    for &i in test_left.iter().chain(seed_left) {
        if spec.decoy.is_some_and(|d| rng.gen_bool(d.fraction)) {
            decoys.push(i);
        } else if !spec.templates.is_empty() {
            plans.push((i, Plan::Rule(counter % spec.templates.len())));
            counter += 1;
        }
    }
    let is_test: HashSet<u32> = test_left.iter().copied().collect();
    for (i, plan) in &plans {
        if let Plan::Rule(r) = plan {
            if is_test.contains(i) {
                st.required[*i as usize] = Some(spec.templates[*r].length());
            }
        }
    }
    for &i in &decoys {
        if is_test.contains(&i) {
            st.required[i as usize] = Some(3);
        }
    }
    if let (Some(d), Some(_)) = (spec.decoy, decoy_rel) {
        for group in decoys.chunks(d.group_size) {
            plans.push((group[0], Plan::Decoy));
        }
    }

    // each seed anchor hosts one instance per template
    let mut demand = vec![0usize; spec.templates.len() + 1];
    for (i, plan) in &plans {
        match plan {
            Plan::Rule(r) if is_test.contains(i) => demand[*r] += spec.instances_per_pair,
            Plan::Decoy => demand[spec.templates.len()] += spec.instances_per_pair,
            _ => {}
        }
    }
    if let Some((slot, &d)) = demand.iter().enumerate().find(|(_, &d)| d > n_seeds) {
        let what = spec.templates.get(slot).map_or("decoy".into(), |t| t.label());
        return Err(Error::Config(format!(
            "{what} needs {d} anchor slots for test pairs but there are only {n_seeds} seeds"
        )));
    }

    let seed_pairs: Vec<AlignedPair> = seed_left.iter().map(|&i| pair(i)).collect();
    let mut capacity = vec![vec![true; seed_pairs.len()]; spec.templates.len() + 1];
    let mut instances = Vec::new();
    let mut stats = SynthStats::default();
    let mut decoy_groups = decoys.chunks(spec.decoy.map_or(1, |d| d.group_size));
    for (i, plan) in &plans {
        let (slot, members): (usize, Vec<u32>) = match plan {
            Plan::Rule(r) => (*r, vec![*i]),
            Plan::Decoy => (spec.templates.len(), decoy_groups.next().expect("one group per plan").to_vec()),
        };
        for _ in 0..spec.instances_per_pair {
            let free: Vec<usize> = (0..seed_pairs.len())
                .filter(|&k| capacity[slot][k] && !members.iter().any(|&m| seed_pairs[k].left == m))
                .collect();
            let mut placed = false;
            for _ in 0..if free.is_empty() { 0 } else { spec.max_attempts } {
                let k = free[rng.gen_range(0..free.len())];
                let anchor = seed_pairs[k];
                let edges = match plan {
                    Plan::Rule(r) => rule_edges(&st.chains[*r], *i, perm[*i as usize], anchor, n, &mut rng),
                    Plan::Decoy => {
                        let rd = decoy_rel.expect("decoy relation");
                        members
                            .iter()
                            .flat_map(|&m| [Some((0, m, rd, anchor.left)), Some((1, perm[m as usize], rd, anchor.right))])
                            .collect()
                    }
                };
                let Some(edges) = edges_or_none(edges) else { continue };
                if st.try_add(&edges, true) {
                    capacity[slot][k] = false;
                    for &m in &members {
                        instances.push(PlantedInstance {
                            pair: pair(m),
                            rule: match plan {
                                Plan::Rule(r) => Some(*r),
                                Plan::Decoy => None,
                            },
                            anchor,
                            length: match plan {
                                Plan::Rule(r) => spec.templates[*r].length(),
                                Plan::Decoy => 3,
                            },
                        });
                    }
                    placed = true;
                    break;
                }
                stats.rejected_instances += 1;
            }
            if !placed {
                if members.iter().all(|m| !is_test.contains(m)) {
                    // seeds only lose training signal; test pairs must be planted
                    stats.unplanted_seeds += members.len();
                    break;
                }
                return Err(Error::Sampling(format!(
                    "no anchor of {} free slots accepted a {} instance for test pair {i} ({} planted, {} rejected)",
                    free.len(),
                    match plan {
                        Plan::Rule(r) => spec.templates[*r].label(),
                        Plan::Decoy => "decoy".into(),
                    },
                    instances.len(),
                    stats.rejected_instances
                )));
            }
        }
    }

    let noise_rels: Vec<usize> = (0..spec.relations).filter(|&r| Some(r) != decoy_rel).collect();
    let noise_budget = spec.noise_edges * 50 + 100;
    for side in 0..2 {
        let mut placed = 0;
        let mut tries = 0;
        while placed < spec.noise_edges {
            tries += 1;
            if tries > noise_budget {
                return Err(Error::Sampling(format!(
                    "placed {placed} of {} noise edges on side {} in {noise_budget} tries",
                    spec.noise_edges,
                    side + 1
                )));
            }
            let h = rng.gen_range(0..n as u32);
            let t = rng.gen_range(0..n as u32);
            let r = noise_rels[rng.gen_range(0..noise_rels.len())];
            if h == t || st.sides[side].edges.contains(&(h, r, t)) {
                continue;
            }
            if st.try_add(&[(side, h, r, t)], true) {
                placed += 1;
            } else {
                stats.rejected_noise += 1;
            }
        }
        stats.noise_edges += placed;
    }

    let build = |side: Side, sg: &SideGraph| -> Result<KnowledgeGraph> {
        let mut g = KnowledgeGraph::new(side);
        let prefix = if side == Side::Kg1 { "a" } else { "b" };
        for i in 0..n {
            g.entities.intern(&format!("{prefix}{i}"));
        }
        for r in 0..spec.relations {
            g.relations.intern(&format!("r{r}"));
        }
        let mut edges: Vec<_> = sg.edges.iter().copied().collect();
        edges.sort_unstable();
        for (h, r, t) in edges {
            g.add_triple_ids(h, r as u32, t)?;
        }
        Ok(g)
    };
    let mut g1 = build(Side::Kg1, &st.sides[0])?;
    let mut g2 = build(Side::Kg2, &st.sides[1])?;
    let features = match spec.attributes {
        Some(a) => Some(plant_attributes(a, &mut g1, &mut g2, &perm, &mut rng)?),
        None => None,
    };
    let mut seeds: Vec<AlignedPair> = seed_pairs.clone();
    seeds.extend(&noisy);
    let mut test: Vec<AlignedPair> = test_left.iter().map(|&i| pair(i)).collect();
    seeds.sort();
    test.sort();
    instances.sort_by_key(|i| (i.pair, i.anchor));
    Ok(SynthDataset {
        dataset: Dataset { g1, g2, seeds, test },
        rules,
        instances,
        features,
        stats,
    })
}

/// Same-side edges realizing `chain` between `u` and `v` through `anchor`,
/// with random distinct intermediate entities.
fn rule_edges(
    chain: &[Vec<usize>; 2],
    u: u32,
    v: u32,
    anchor: AlignedPair,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Option<(usize, u32, usize, u32)>> {
    let mut out = Vec::new();
    for (side, (start, end)) in [(u, anchor.left), (v, anchor.right)].into_iter().enumerate() {
        let rels = &chain[side];
        let mut nodes = vec![start];
        let mut used: HashSet<u32> = [start, end].into();
        for _ in 1..rels.len() {
            let x = (0..64).map(|_| rng.gen_range(0..n as u32)).find(|x| !used.contains(x));
            match x {
                Some(x) => {
                    used.insert(x);
                    nodes.push(x);
                }
                None => return vec![None],
            }
        }
        nodes.push(end);
        if start == end {
            return vec![None];
        }
        for (k, &r) in rels.iter().enumerate() {
            out.push(Some((side, nodes[k], r, nodes[k + 1])));
        }
    }
    out
}

fn edges_or_none(edges: Vec<Option<(usize, u32, usize, u32)>>) -> Option<Vec<(usize, u32, usize, u32)>> {
    edges.into_iter().collect()
}

fn plant_attributes(
    spec: AttributeSpec,
    g1: &mut KnowledgeGraph,
    g2: &mut KnowledgeGraph,
    perm: &[u32],
    rng: &mut ChaCha8Rng,
) -> Result<FeatureStore> {
    if spec.dim == 0 {
        return Err(Error::Config("attribute dimension must be positive".into()));
    }
    let n = perm.len();
    let mut vision = FeatureMatrix::new("vision", spec.dim);
    let mut text = FeatureMatrix::new("text", spec.dim);
    let vec_of = |rng: &mut ChaCha8Rng, base: Option<&[f32]>| -> Vec<f32> {
        (0..spec.dim)
            .map(|k| {
                let e = rng.gen_range(-1.0f32..1.0);
                match base {
                    Some(b) => b[k] + spec.noise as f32 * e,
                    None => e,
                }
            })
            .collect()
    };
    for i in 0..n {
        let latent = vec_of(rng, None);
        let j = perm[i];
        let (k1, k2) = (format!("img/a{i}"), format!("img/b{j}"));
        vision.push(k1.clone(), &vec_of(rng, Some(&latent)))?;
        vision.push(k2.clone(), &vec_of(rng, Some(&latent)))?;
        g1.add_attribute(&format!("a{i}"), "image", &k1);
        g2.add_attribute(&format!("b{j}"), "image", &k2);
    }
    for (g, prefix) in [(g1, "a"), (g2, "b")] {
        for i in 0..n {
            for d in 0..spec.distractors {
                let key = format!("txt/{prefix}{i}/{d}");
                text.push(key.clone(), &vec_of(rng, None))?;
                g.add_attribute(&format!("{prefix}{i}"), &format!("{prefix}_attr{d}"), &key);
            }
        }
    }
    let mut store = FeatureStore::new();
    store.add(vision)?;
    if spec.distractors > 0 {
        store.add(text)?;
    }
    Ok(store)
}
