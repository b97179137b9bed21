mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use subalign::model::AttentionKind;
use subalign::train::Variant;
use subalign::ErrorKind;

/// Entity alignment over align-subgraphs.
///
/// Results go to stdout as JSON (DOT for `explain --format dot`); logs go to
/// stderr. Exit codes: 1 configuration error, 2 data error, 3 runtime error.
#[derive(Debug, Parser)]
#[command(name = "subalign", version)]
struct Cli {
    /// Worker threads for extraction, training and evaluation.
    #[arg(long, global = true, env = "ASG_THREADS")]
    threads: Option<usize>,

    /// Log level on stderr (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the align-subgraph of one source entity.
    Extract(ExtractArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a trained run.
    Eval(EvalArgs),
    /// Show the alignment paths behind one prediction.
    Explain(ExplainArgs),
    /// Aggregate alignment paths into ranked rules.
    MineRules(MineArgs),
    /// Write a synthetic dataset with planted rules.
    GenSynth(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Kg1,
    Kg2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Dot,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairSet {
    Test,
    Train,
    Seeds,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Source entity name.
    #[arg(long)]
    source: String,
    /// Graph holding the source entity.
    #[arg(long, value_enum, default_value = "kg1")]
    side: SideArg,
    /// Restrict to the paths ending at this opposite-side entity.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    /// Keep only symmetric paths.
    #[arg(long)]
    symmetric: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// TOML config; its keys override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_parser = parse_attention)]
    attention: Option<AttentionKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Share of seed pairs used as anchors; the rest are training pairs.
    #[arg(long)]
    anchor_fraction: Option<f64>,
    /// Draw a new anchor/training split every epoch.
    #[arg(long)]
    resplit_each_epoch: bool,
    /// Disable global-norm gradient clipping.
    #[arg(long)]
    no_grad_clip: bool,
    /// Text feature matrix (`.bin`, keys in the sibling `.json`).
    #[arg(long)]
    features_text: Option<PathBuf>,
    /// Vision feature matrix (`.bin`, keys in the sibling `.json`).
    #[arg(long)]
    features_vision: Option<PathBuf>,
    /// Add mutual-nearest-neighbour feature pairs above this cosine as anchors.
    #[arg(long)]
    modal_anchor_threshold: Option<f64>,
    /// Skip the final test-set evaluation.
    #[arg(long)]
    no_eval: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pairs: PairSet,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include per-query ranks.
    #[arg(long)]
    ranks: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    run: PathBuf,
    /// First-graph and second-graph entity names.
    #[arg(long, num_args = 2, value_names = ["E1", "E2"])]
    pair: Vec<String>,
    /// Explain the query issued from this side.
    #[arg(long, value_enum, default_value = "kg1")]
    from: SideArg,
    #[arg(long, default_value_t = subalign::explain::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, default_value_t = subalign::explain::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "test")]
    pairs: PairSet,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON synthetic spec; missing keys take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: subalign::Error| e.to_string())
}

fn parse_attention(s: &str) -> Result<AttentionKind, String> {
    s.parse().map_err(|e: subalign::Error| e.to_string())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Runtime => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Explain(a) => commands::explain(a),
        Command::MineRules(a) => commands::mine_rules(a),
        Command::GenSynth(a) => commands::gen_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
