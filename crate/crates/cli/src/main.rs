//! `progress`: cluster a pool, select a curriculum under a budget, simulate policies and
//! analyze benchmarks. Every run writes its resolved configuration next to its outputs.

mod analyze;
mod cluster;
mod config;
mod error;
mod output;
mod select;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use log::LevelFilter;

use progress_core::engine::MetricKind;
use progress_core::sim::PolicyKind;

use config::{BenchmarkSource, RunConfig};
use error::{CliError, CliResult};
use output::OutDir;

#[derive(Debug, Parser)]
#[command(
    name = "progress",
    version,
    about = "Budgeted curriculum data selection"
)]
struct Cli {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (default: data.output_dir, then ./out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit spherical k-means and write centroids, assignment and a quality report.
    Cluster(ClusterArgs),
    /// Warmup then prioritized rounds until the budget is spent.
    Select(SelectArgs),
    /// Compare policies on a synthetic population over several seeds.
    Simulate(SimulateArgs),
    /// Benchmark rarity, cluster ability labels or benchmark difficulty.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Cluster count for the selection partition.
    #[arg(long)]
    k: Option<usize>,
    /// Also fit a partition of this size for warmup.
    #[arg(long)]
    k_warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    assignment: Option<PathBuf>,
    #[arg(long)]
    centroids: Option<PathBuf>,
    /// JSONL metric snapshots; without them the synthetic learner supplies the metrics.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    /// Exploration fraction of each round.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    round_size: Option<usize>,
    #[arg(long)]
    metric: Option<MetricKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Policy used in simulator mode.
    #[arg(long)]
    policy: Option<PolicyKind>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra progress runs at each of these temperatures.
    #[arg(long, value_delimiter = ',')]
    tau_sweep: Option<Vec<f64>>,
    /// Replay every progress run with its selections shuffled.
    #[arg(long)]
    shuffle_ablation: bool,
    #[arg(long)]
    budget_fraction: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    round_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Which benchmark each training sample resembles most, and how rare each benchmark is.
    Rarity {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// NAME=PATH, repeatable.
        #[arg(long = "benchmark", value_parser = parse_benchmark)]
        benchmarks: Vec<BenchmarkSource>,
    },
    /// Label each cluster with the ability of its nearest benchmark samples.
    Ability {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[arg(long)]
        benchmark_embeddings: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Normalized headroom of each benchmark score.
    Difficulty {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

fn parse_benchmark(s: &str) -> Result<BenchmarkSource, String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    if name.is_empty() || path.is_empty() {
        return Err("expected NAME=PATH".into());
    }
    Ok(BenchmarkSource {
        name: name.to_string(),
        embeddings: PathBuf::from(path),
    })
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Cluster(_) => "cluster",
            Command::Select(_) => "select",
            Command::Simulate(_) => "simulate",
            Command::Analyze(AnalyzeCommand::Rarity { .. }) => "analyze rarity",
            Command::Analyze(AnalyzeCommand::Ability { .. }) => "analyze ability",
            Command::Analyze(AnalyzeCommand::Difficulty { .. }) => "analyze difficulty",
        }
    }

    /// Folds the flags into the file configuration.
    fn apply(self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        match self {
            Command::Cluster(a) => {
                set_path(&mut d.embeddings, a.embeddings);
                set_path(&mut d.manifest, a.manifest);
                set(&mut cfg.clustering.k_pcl, a.k);
                if a.k_warmup.is_some() {
                    cfg.clustering.k_warmup = a.k_warmup;
                }
                set(&mut cfg.clustering.seed, a.seed);
            }
            Command::Select(a) => {
                set_path(&mut d.embeddings, a.embeddings);
                set_path(&mut d.assignment, a.assignment);
                set_path(&mut d.centroids, a.centroids);
                set_path(&mut d.snapshots, a.snapshots);
                let e = &mut cfg.engine;
                set(&mut e.tau, a.tau);
                set(&mut e.delta_explore, a.delta);
                set(&mut e.budget_total, a.budget);
                set(&mut e.round_size, a.round_size);
                set(&mut e.metric_kind, a.metric);
                set(&mut e.seed, a.seed);
                set(&mut cfg.simulator.policy, a.policy);
            }
            Command::Simulate(a) => {
                let s = &mut cfg.simulator;
                set(&mut s.policies, a.policies);
                set(&mut s.seeds, a.seeds);
                set(&mut s.seed_offset, a.seed);
                set(&mut s.tau_sweep, a.tau_sweep);
                s.shuffle_ablation |= a.shuffle_ablation;
                set(&mut s.budget_fraction, a.budget_fraction);
                set(&mut cfg.engine.tau, a.tau);
                set(&mut cfg.engine.round_size, a.round_size);
            }
            Command::Analyze(AnalyzeCommand::Rarity {
                embeddings,
                benchmarks,
            }) => {
                set_path(&mut d.embeddings, embeddings);
                if !benchmarks.is_empty() {
                    d.benchmarks = benchmarks;
                }
            }
            Command::Analyze(AnalyzeCommand::Ability {
                embeddings,
                assignment,
                benchmark_embeddings,
                labels,
            }) => {
                set_path(&mut d.embeddings, embeddings);
                set_path(&mut d.assignment, assignment);
                set_path(&mut d.benchmark_embeddings, benchmark_embeddings);
                set_path(&mut d.ability_labels, labels);
            }
            Command::Analyze(AnalyzeCommand::Difficulty { scores }) => {
                set_path(&mut d.scores, scores);
            }
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let name = cli.command.name();
    cli.command.apply(&mut cfg);
    let out_path = cli
        .out
        .or_else(|| cfg.data.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.data.output_dir = Some(out_path.clone());
    cfg.validate()?;

    let out = OutDir::create(&out_path)?;
    out.echo_config(&cfg)?;
    log::info!("{name}: writing to {}", out_path.display());
    match name {
        "cluster" => cluster::run(&cfg, &out),
        "select" => select::run(&cfg, &out),
        "simulate" => simulate::run(&cfg, &out),
        "analyze rarity" => analyze::rarity(&cfg, &out),
        "analyze ability" => analyze::ability(&cfg, &out),
        "analyze difficulty" => analyze::difficulty(&cfg, &out),
        other => Err(CliError::Internal(format!("unhandled command {other}"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
