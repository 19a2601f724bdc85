//! Command-line front end: scenario generation, training, evaluation and
//! baseline comparison.

mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kdoffload::a3c::{self, A3cError, DiscountExponent, EvalConfig, EvalMetrics, EvalRun, Hyperparams};
use kdoffload::baselines::{evaluate_baseline, Baseline};
use kdoffload::checkpoint::Checkpoint;
use kdoffload::env::Candidate;
use kdoffload::scenario::{self, presets, Scenario, ScenarioConfig};

pub use output::{OutputSet, TraceRow, TrainingRow, COMPARISON_SCHEMA, METRICS_SCHEMA, TRACE_SCHEMA, TRAINING_SCHEMA};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// A failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: flags, config, scenario or checkpoint files, or an
    /// output that would be overwritten.
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e:#}"),
            Self::Runtime(e) => write!(f, "runtime error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn classify(e: A3cError) -> CliError {
    match e {
        A3cError::Hyper(_) | A3cError::Incompatible(_) => config_err(e),
        other => runtime_err(other),
    }
}

#[derive(Debug, Parser)]
#[command(name = "kdoffload", version, about = "Vehicular service offloading simulator and learner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Materialise a scenario (nodes and service) from a config.
    Gen(GenArgs),
    /// Train the actor-critic policy.
    Train(TrainArgs),
    /// Evaluate a trained policy with greedy actions.
    Eval(EvalArgs),
    /// Evaluate a trained policy and baselines on the same episodes.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Reference,
    DominantNode,
    DependencyTrap,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenario config (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled config instead of a file.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Materialised scenario, or a config to materialise on the fly.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Node seed used when `--scenario` is a config.
    #[arg(long, default_value_t = 0)]
    pub scenario_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Full hyperparameter set (TOML); flags below override it.
    #[arg(long)]
    pub hyper: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Entropy regularisation strength.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Learning rate for both networks.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run all workers' episodes in turn on one thread (reproducible).
    #[arg(long)]
    pub single_thread: bool,
    /// Output directory for `model.ckpt` and `training.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 500)]
    pub episodes: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = Discount::PerStep)]
    pub discount: Discount,
    /// Output directory. `eval` writes `metrics.json` and `trace.csv`;
    /// `compare` writes `comparison.json` and `comparison.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, value_delimiter = ',', default_value = "greedy,local,random")]
    pub baselines: Vec<Baseline>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Discount {
    PerStep,
    AsPrinted,
}

impl From<Discount> for DiscountExponent {
    fn from(d: Discount) -> Self {
        match d {
            Discount::PerStep => DiscountExponent::PerStep,
            Discount::AsPrinted => DiscountExponent::AsPrinted,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Compare(a) => cmd_compare(&a).map(|_| ()),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)
}

pub fn load_scenario(args: &ScenarioArgs) -> Result<Arc<Scenario>, CliError> {
    let text = read_text(&args.scenario)?;
    scenario::load_scenario_text(&text, args.scenario_seed)
        .with_context(|| format!("loading scenario {}", args.scenario.display()))
        .map(Arc::new)
        .map_err(config_err)
}

fn preset_config(p: Preset) -> ScenarioConfig {
    match p {
        Preset::Reference => presets::reference_config(),
        Preset::DominantNode => presets::dominant_node_config(),
        Preset::DependencyTrap => presets::dependency_trap_config(),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let mut out = OutputSet::new(args.force);
    out.claim(&args.out)?;
    let scenario = match (&args.config, args.preset) {
        (Some(path), _) => {
            let text = read_text(path)?;
            let config = ScenarioConfig::from_toml(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(config_err)?;
            scenario::materialize(&config, args.seed)
        }
        (None, Some(Preset::DependencyTrap)) => presets::dependency_trap(),
        (None, Some(p)) => scenario::materialize(&preset_config(p), args.seed),
        (None, None) => return Err(config_err(anyhow!("either --config or --preset is required"))),
    }
    .map_err(config_err)?;
    let text = scenario.to_toml().map_err(runtime_err)?;
    out.write(&args.out, text.as_bytes())
}

pub fn train_hyper(args: &TrainArgs) -> Result<Hyperparams, CliError> {
    let mut hyper = match &args.hyper {
        Some(path) => toml::from_str::<Hyperparams>(&read_text(path)?)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(config_err)?,
        None => Hyperparams::reference(),
    };
    if let Some(w) = args.workers {
        hyper.workers = w;
    }
    if let Some(g) = args.gamma {
        hyper.gamma = g;
    }
    if let Some(d) = args.delta {
        hyper.entropy_coef = d;
    }
    if let Some(e) = args.episodes {
        hyper.episodes = e;
    }
    if let Some(lr) = args.lr {
        hyper.lr_actor = lr;
        hyper.lr_critic = lr;
    }
    if let Some(s) = args.seed {
        hyper.seed = s;
    }
    if args.single_thread {
        hyper.single_thread = true;
    }
    hyper.validate().map_err(classify)?;
    Ok(hyper)
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAINING_FILE: &str = "training.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_CSV: &str = "comparison.csv";

pub fn cmd_train(args: &TrainArgs) -> Result<a3c::TrainReport, CliError> {
    let hyper = train_hyper(args)?;
    let scenario = load_scenario(&args.scenario)?;
    let mut out = OutputSet::new(args.force);
    let ckpt_path = args.out.join(CHECKPOINT_FILE);
    let log_path = args.out.join(TRAINING_FILE);
    out.claim(&ckpt_path)?;
    out.claim(&log_path)?;
    let report = a3c::train(scenario, &hyper).map_err(classify)?;
    let rows: Vec<TrainingRow> = report.records.iter().map(TrainingRow::from).collect();
    out.write(&log_path, &output::csv_bytes(TRAINING_SCHEMA, &rows)?)?;
    out.write(&ckpt_path, report.checkpoint().to_text().as_bytes())?;
    eprintln!(
        "trained {} episodes in {:.1?} ({} applies); wrote {}",
        report.records.len(),
        report.wall_clock,
        report.applies,
        args.out.display()
    );
    Ok(report)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(config_err)
}

fn eval_config(args: &EvalArgs) -> Result<EvalConfig, CliError> {
    if !(0.0..=1.0).contains(&args.gamma) {
        return Err(config_err(anyhow!("--gamma must lie in [0, 1]")));
    }
    Ok(EvalConfig { episodes: args.episodes, seed: args.seed, gamma: args.gamma, discount: args.discount.into() })
}

/// Human-readable label for every action slot.
pub fn slot_labels(scenario: &Arc<Scenario>) -> Result<Vec<String>, CliError> {
    let env = kdoffload::env::Env::new(scenario.clone()).map_err(config_err)?;
    Ok(env
        .candidates()
        .iter()
        .map(|c| match *c {
            Candidate::Local => "local".to_string(),
            Candidate::Node { kind, id } => {
                let f = scenario.node(id).map_or(0.0, |n| n.cpu_freq);
                format!("{kind}#{id}@{f}")
            }
            Candidate::Pseudo { kind } => format!("{kind}#pseudo"),
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyMetrics {
    pub policy: String,
    #[serde(flatten)]
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsFile {
    pub schema: &'static str,
    pub episodes: usize,
    pub seed: u64,
    pub gamma: f64,
    pub discount: DiscountExponent,
    pub slot_labels: Vec<String>,
    pub policies: Vec<PolicyMetrics>,
}

fn policy_eval(ckpt: &Checkpoint, scenario: &Arc<Scenario>, cfg: &EvalConfig) -> Result<EvalRun, CliError> {
    a3c::evaluate(&ckpt.actor, &ckpt.norms, scenario.clone(), cfg).map_err(classify)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsFile, CliError> {
    let cfg = eval_config(args)?;
    let scenario = load_scenario(&args.scenario)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut out = OutputSet::new(args.force);
    let metrics_path = args.out.join(METRICS_FILE);
    let trace_path = args.out.join(TRACE_FILE);
    out.claim(&metrics_path)?;
    out.claim(&trace_path)?;
    let run = policy_eval(&ckpt, &scenario, &cfg)?;
    let file = MetricsFile {
        schema: METRICS_SCHEMA,
        episodes: cfg.episodes,
        seed: cfg.seed,
        gamma: cfg.gamma,
        discount: cfg.discount,
        slot_labels: slot_labels(&scenario)?,
        policies: vec![PolicyMetrics { policy: "kd".into(), metrics: run.metrics.clone() }],
    };
    out.write(&trace_path, &output::csv_bytes(TRACE_SCHEMA, &TraceRow::from_run(&run))?)?;
    out.write(&metrics_path, &output::json_bytes(&file)?)?;
    println!("{}", output::table(&file));
    Ok(file)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<MetricsFile, CliError> {
    let e = &args.eval;
    let cfg = eval_config(e)?;
    let scenario = load_scenario(&e.scenario)?;
    let ckpt = load_checkpoint(&e.checkpoint)?;
    let mut out = OutputSet::new(e.force);
    let json_path = e.out.join(COMPARISON_JSON);
    let csv_path = e.out.join(COMPARISON_CSV);
    out.claim(&json_path)?;
    out.claim(&csv_path)?;
    let mut runs = vec![("kd".to_string(), policy_eval(&ckpt, &scenario, &cfg)?)];
    for &b in &args.baselines {
        let run = evaluate_baseline(scenario.clone(), b, &cfg).map_err(classify)?;
        runs.push((b.name().to_string(), run));
    }
    let file = MetricsFile {
        schema: COMPARISON_SCHEMA,
        episodes: cfg.episodes,
        seed: cfg.seed,
        gamma: cfg.gamma,
        discount: cfg.discount,
        slot_labels: slot_labels(&scenario)?,
        policies: runs.iter().map(|(n, r)| PolicyMetrics { policy: n.clone(), metrics: r.metrics.clone() }).collect(),
    };
    out.write(&csv_path, &output::csv_bytes(COMPARISON_SCHEMA, &output::paired_rows(&runs))?)?;
    out.write(&json_path, &output::json_bytes(&file)?)?;
    println!("{}", output::table(&file));
    Ok(file)
}
