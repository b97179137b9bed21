use crate::manifest::{keys_path, RunManifest, CHECKPOINT, CONFIG, REPORT};
use crate::{EvalArgs, ExplainArgs, ExtractArgs, Format, GenArgs, MineArgs, PairSet, Precision, SideArg, TrainArgs};
use serde::Serialize;
use std::io::Write as _;
use std::path::Path;
use subalign::explain::{explanation_to_dot, explanation_to_json, extract_explanation, mine_rules as mine, RuleSignature};
use subalign::extract::{extract as extract_asg, extract_pair_asg, ExtractionMode};
use subalign::kg::{build_merged_graph, AlignedPair, AnchorSet, Dataset, EntityId, KnowledgeGraph, MergedGraph, Side};
use subalign::mm::{FeatureMatrix, FeatureStore};
use subalign::nn::{load_checkpoint, save_checkpoint};
use subalign::synth::{generate, SynthSpec};
use subalign::train::{EvalReport, TrainConfig, TrainReport, Trainer};
use subalign::{Error, Result, Scalar};

/// Writes a payload to stdout; a closed pipe is not an error.
fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", text.trim_end()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn emit(value: &impl Serialize) -> Result<()> {
    print(&serde_json::to_string_pretty(value)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn side(s: SideArg) -> Side {
    match s {
        SideArg::Kg1 => Side::Kg1,
        SideArg::Kg2 => Side::Kg2,
    }
}

fn entity(g: &KnowledgeGraph, name: &str) -> Result<EntityId> {
    g.entity(name)
        .ok_or_else(|| Error::Data(format!("no entity `{name}` in {}", g.side)))
}

fn load_features(text: Option<&Path>, vision: Option<&Path>) -> Result<Option<FeatureStore>> {
    if text.is_none() && vision.is_none() {
        return Ok(None);
    }
    let mut store = FeatureStore::new();
    for (path, tag) in [(text, "text"), (vision, "vision")] {
        if let Some(p) = path {
            let m = FeatureMatrix::read(p, &keys_path(p))?;
            if m.modality != tag {
                return Err(Error::Data(format!("{} holds `{}` features, expected `{tag}`", p.display(), m.modality)));
            }
            store.add(m)?;
        }
    }
    Ok(Some(store))
}

#[derive(Serialize)]
struct AsgOutput {
    source: String,
    depth: usize,
    mode: ExtractionMode,
    edges: usize,
    targets: Vec<String>,
    layers: Vec<Vec<[String; 3]>>,
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let d = Dataset::load_dir(&a.data)?;
    let g = build_merged_graph(&d.g1, &d.g2, &AnchorSet::from_aligned(&d.seeds))?;
    let (mine, other) = match side(a.side) {
        Side::Kg1 => (&d.g1, &d.g2),
        Side::Kg2 => (&d.g2, &d.g1),
    };
    let u = entity(mine, &a.source)?;
    let mode = if a.symmetric {
        ExtractionMode::Symmetric
    } else {
        ExtractionMode::Merged
    };
    let asg = match &a.target {
        Some(t) if !a.symmetric => extract_pair_asg(&g, u, entity(other, t)?, a.depth)?,
        Some(_) => return Err(Error::Config("--target cannot be combined with --symmetric".into())),
        None => extract_asg(&g, u, a.depth, mode)?,
    };
    let name = |n: u32| g.entity_name(n).to_owned();
    emit(&AsgOutput {
        source: a.source,
        depth: asg.depth,
        mode,
        edges: asg.num_layered_edges(),
        targets: asg.targets.iter().map(|&t| name(t)).collect(),
        layers: asg
            .layers
            .iter()
            .map(|l| l.iter().map(|e| [name(e.head), g.relation_label(e.rel), name(e.tail)]).collect())
            .collect(),
    })
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = a.$field { c.$field = v; })*
        };
    }
    set!(variant, epochs, lr, weight_decay, dropout, batch_size, depth, dim, attention, seed, anchor_fraction);
    c.resplit_each_epoch |= a.resplit_each_epoch;
    c.grad_clip &= !a.no_grad_clip;
    if a.modal_anchor_threshold.is_some() {
        c.modal_anchor_threshold = a.modal_anchor_threshold;
    }
    match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            c.overlay_toml(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
        None => c.validate().map(|_| c),
    }
}

#[derive(Debug, Serialize)]
struct TrainOutput {
    precision: &'static str,
    train: TrainReport,
    eval: Option<EvalReport>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = train_config(&a)?;
    let precision = match a.precision {
        Precision::F32 => f32::NAME,
        Precision::F64 => f64::NAME,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let manifest = RunManifest::new(
        precision,
        &config,
        &a.data,
        a.features_text.as_deref(),
        a.features_vision.as_deref(),
        &a.out,
    )?;
    manifest.save(&a.out)?;
    write(&a.out.join(CONFIG), &config.to_toml())?;
    let d = Dataset::load_dir(&a.data)?;
    let features = load_features(a.features_text.as_deref(), a.features_vision.as_deref())?;
    let out = match a.precision {
        Precision::F32 => train_as::<f32>(&a, config, &d, features.as_ref())?,
        Precision::F64 => train_as::<f64>(&a, config, &d, features.as_ref())?,
    };
    write(&a.out.join(REPORT), &serde_json::to_string_pretty(&out)?)?;
    emit(&out)
}

fn train_as<T: Scalar>(
    a: &TrainArgs,
    config: TrainConfig,
    d: &Dataset,
    features: Option<&FeatureStore>,
) -> Result<TrainOutput> {
    let mut t: Trainer<'_, T> = Trainer::new(config, &d.g1, &d.g2, &d.seeds, features)?;
    log::info!(
        "training {} on {} anchors and {} training pairs",
        t.config.variant,
        t.split().anchors.len(),
        t.split().train.len()
    );
    let report = t.train()?;
    let ckpt = a.out.join(CHECKPOINT);
    save_checkpoint(&t.model.params, &ckpt)?;
    // evaluate exactly what `eval` will load
    t.model.params.load_from(&load_checkpoint(&ckpt)?)?;
    let eval = if a.no_eval {
        None
    } else {
        let mut r = t.evaluate(&d.test)?;
        r.ranks.clear();
        log::info!("test metrics\n{}", r.to_table());
        Some(r)
    };
    Ok(TrainOutput {
        precision: T::NAME,
        train: report,
        eval,
    })
}

/// A trained run rebuilt from its directory.
struct Run {
    manifest: RunManifest,
    data: Dataset,
    features: Option<FeatureStore>,
}

impl Run {
    fn open(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(dir)?;
        manifest.verify_inputs()?;
        let data = Dataset::load_dir(&manifest.data_dir)?;
        let features = load_features(manifest.features_text.as_deref(), manifest.features_vision.as_deref())?;
        Ok(Self {
            manifest,
            data,
            features,
        })
    }

    fn trainer<T: Scalar>(&self, dir: &Path) -> Result<Trainer<'_, T>> {
        let d = &self.data;
        let mut t = Trainer::new(self.manifest.config.clone(), &d.g1, &d.g2, &d.seeds, self.features.as_ref())?;
        t.model.params.load_from(&load_checkpoint(&dir.join(CHECKPOINT))?)?;
        Ok(t)
    }

    fn pairs<T: Scalar>(&self, t: &Trainer<'_, T>, set: PairSet) -> Vec<AlignedPair> {
        match set {
            PairSet::Test => self.data.test.clone(),
            PairSet::Train => t.split().train.clone(),
            PairSet::Seeds => self.data.seeds.clone(),
        }
    }
}

/// Runs `$body` with `$t` bound to the trainer at the run's precision.
macro_rules! with_trainer {
    ($run:expr, $dir:expr, |$t:ident| $body:expr) => {
        match $run.manifest.precision.as_str() {
            "f32" => {
                let $t = $run.trainer::<f32>($dir)?;
                $body
            }
            "f64" => {
                let $t = $run.trainer::<f64>($dir)?;
                $body
            }
            p => Err(Error::Data(format!("unknown precision `{p}` in run manifest"))),
        }
    };
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let run = Run::open(&a.run)?;
    let mut report = with_trainer!(run, &a.run, |t| {
        let pairs = run.pairs(&t, a.pairs);
        t.evaluate(&pairs)
    })?;
    log::info!("{}", report.to_table());
    if !a.ranks {
        report.ranks.clear();
    }
    if let Some(p) = &a.out {
        write(p, &serde_json::to_string_pretty(&report)?)?;
    }
    emit(&report)
}

fn explain_pair<T: Scalar>(
    t: &Trainer<'_, T>,
    graph: &MergedGraph,
    source: EntityId,
    gold: EntityId,
    threshold: f64,
) -> Result<Option<subalign::explain::Explanation>> {
    let mode = t.config.variant.extraction();
    let scored = t.model.score_source(graph, source, mode, t.modal_data())?;
    let g = graph.node(gold);
    if scored.score_of(g).is_none() {
        return Ok(None);
    }
    extract_explanation(graph, &scored.asg, &scored.attention, g, threshold, mode).map(Some)
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Config(format!("--threshold {t} outside [0, 1)")))
    }
}

pub fn explain(a: ExplainArgs) -> Result<()> {
    check_threshold(a.threshold)?;
    let run = Run::open(&a.run)?;
    let d = &run.data;
    let (e1, e2) = (entity(&d.g1, &a.pair[0])?, entity(&d.g2, &a.pair[1])?);
    let (source, gold) = match side(a.from) {
        Side::Kg1 => (e1, e2),
        Side::Kg2 => (e2, e1),
    };
    let text = with_trainer!(run, &a.run, |t| {
        let graph = t.eval_graph()?;
        let ex = explain_pair(&t, &graph, source, gold, a.threshold)?.ok_or_else(|| {
            Error::Precondition(format!(
                "`{}` is not reachable from `{}` within depth {}",
                graph.entity_name(graph.node(gold)),
                graph.entity_name(graph.node(source)),
                t.config.depth
            ))
        })?;
        if ex.paths.is_empty() {
            log::warn!("no path survives threshold {}; showing the heaviest path instead", a.threshold);
        }
        match a.format {
            Format::Dot => Ok(explanation_to_dot(&graph, &ex)),
            Format::Json => explanation_to_json(&ex),
        }
    })?;
    match &a.out {
        Some(p) => write(p, &text),
        None => print(&text),
    }
}

#[derive(Serialize)]
struct MineOutput {
    pairs: usize,
    explained: usize,
    rules: Vec<RuleSignature>,
}

pub fn mine_rules(a: MineArgs) -> Result<()> {
    if a.top == 0 {
        return Err(Error::Config("--top must be at least 1".into()));
    }
    check_threshold(a.threshold)?;
    let run = Run::open(&a.run)?;
    let out = with_trainer!(run, &a.run, |t| {
        let graph = t.eval_graph()?;
        let pairs = run.pairs(&t, a.pairs);
        let mut explanations = Vec::new();
        for p in &pairs {
            for (s, g) in [(p.left_entity(), p.right_entity()), (p.right_entity(), p.left_entity())] {
                if let Some(ex) = explain_pair(&t, &graph, s, g, a.threshold)? {
                    explanations.push(ex);
                }
            }
        }
        if explanations.is_empty() {
            return Err(Error::Data("no pair is reachable, nothing to explain".into()));
        }
        let mut rules = mine(&graph, &explanations);
        log::info!("{}", subalign::explain::rules_table(&rules[..rules.len().min(a.top)]));
        rules.truncate(a.top);
        Ok(MineOutput {
            pairs: pairs.len(),
            explained: explanations.len(),
            rules,
        })
    })?;
    emit(&out)
}

#[derive(Serialize)]
struct GenOutput {
    out: String,
    entities_per_side: usize,
    kg1_triples: usize,
    kg2_triples: usize,
    seeds: usize,
    test: usize,
    rules: Vec<String>,
    stats: subalign::synth::SynthStats,
}

pub fn gen_synth(a: GenArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let s = generate(&spec)?;
    s.write(&spec, &a.out)?;
    let d = &s.dataset;
    emit(&GenOutput {
        out: a.out.display().to_string(),
        entities_per_side: spec.entities_per_side,
        kg1_triples: d.g1.triples().len(),
        kg2_triples: d.g2.triples().len(),
        seeds: d.seeds.len(),
        test: d.test.len(),
        rules: s.rules.iter().map(|r| r.template.label()).collect(),
        stats: s.stats.clone(),
    })
}
