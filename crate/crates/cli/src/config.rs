use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use progress_core::analysis::{
    RarityMode, DEFAULT_ALPHA, DEFAULT_LAMBDA, DEFAULT_TOP_K, MAX_PROJECTION_DIMS,
};
use progress_core::engine::EngineConfig;
use progress_core::sim::{PolicyKind, PopulationSpec};

use crate::error::{CliError, CliResult};

/// Everything a run needs. Every section is optional in the file and falls back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub clustering: ClusteringConfig,
    pub engine: EngineConfig,
    pub simulator: SimulatorConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSource {
    pub name: String,
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Pool embeddings (binary store).
    pub embeddings: Option<PathBuf>,
    /// JSONL manifest; when given, its ids must match the embedding rows in order.
    pub manifest: Option<PathBuf>,
    /// Cluster assignment of the pool (PCL granularity).
    pub assignment: Option<PathBuf>,
    /// Centroids matching `assignment`.
    pub centroids: Option<PathBuf>,
    /// Warmup-granularity centroids and assignment.
    pub warmup_centroids: Option<PathBuf>,
    pub warmup_assignment: Option<PathBuf>,
    /// JSONL metric snapshots driving `select` instead of the simulator.
    pub snapshots: Option<PathBuf>,
    /// One embedding file per benchmark, for rarity.
    pub benchmarks: Vec<BenchmarkSource>,
    /// Benchmark samples and their ability labels, for ability assignment.
    pub benchmark_embeddings: Option<PathBuf>,
    pub ability_labels: Option<PathBuf>,
    /// JSON array of benchmark scores, for difficulty.
    pub scores: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub k_pcl: usize,
    /// Also fit a warmup-granularity model when set.
    pub k_warmup: Option<usize>,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Renormalize rows before clustering instead of rejecting non-unit rows.
    pub normalize: bool,
    pub pair_sample_cap: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k_pcl: 1_000,
            k_warmup: None,
            seed: 0,
            max_iters: 100,
            tol: 1e-4,
            normalize: true,
            pair_sample_cap: 10_000,
        }
    }
}

/// Where the synthetic population comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSource {
    ThreeTier,
    Symmetric { clusters: usize },
    File { path: PathBuf },
    Inline { spec: PopulationSpec },
}

impl PopulationSource {
    pub fn resolve(&self) -> CliResult<PopulationSpec> {
        Ok(match self {
            PopulationSource::ThreeTier => PopulationSpec::three_tier(),
            PopulationSource::Symmetric { clusters } => PopulationSpec::symmetric(*clusters),
            PopulationSource::File { path } => PopulationSpec::from_json_file(path)?,
            PopulationSource::Inline { spec } => spec.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatorConfig {
    pub population: PopulationSource,
    /// Policy for `select` in simulator mode.
    pub policy: PolicyKind,
    /// Policies compared by `simulate`.
    pub policies: Vec<PolicyKind>,
    pub seeds: usize,
    pub seed_offset: u64,
    /// Budget as a fraction of the pool, used when `engine.budget_total` is 0.
    pub budget_fraction: f64,
    /// Temperatures for the progress policy sweep; empty disables it.
    pub tau_sweep: Vec<f64>,
    pub shuffle_ablation: bool,
    /// Evaluate only the most recent samples of each cluster.
    pub eval_cap: Option<usize>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            population: PopulationSource::ThreeTier,
            policy: PolicyKind::Progress,
            policies: PolicyKind::ALL.to_vec(),
            seeds: 20,
            seed_offset: 0,
            budget_fraction: 0.2,
            tau_sweep: Vec::new(),
            shuffle_ablation: false,
            eval_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub lambda: f64,
    pub rarity_mode: RarityMode,
    /// PCA dimension fitted on the benchmark embeddings before the Gaussians; `None` keeps
    /// the raw space.
    pub projection_dims: Option<usize>,
    pub top_k: usize,
    pub alpha: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            rarity_mode: RarityMode::Exact,
            projection_dims: None,
            top_k: DEFAULT_TOP_K,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the fields every command relies on. Pool-dependent engine checks happen once
    /// the pool size is known.
    pub fn validate(&self) -> CliResult<()> {
        let c = &self.clustering;
        if c.k_pcl == 0 || c.k_warmup == Some(0) {
            return Err(CliError::Config("cluster counts must be at least 1".into()));
        }
        if c.max_iters == 0 || !(c.tol > 0.0) || c.pair_sample_cap == 0 {
            return Err(CliError::Config(
                "max_iters, tol and pair_sample_cap must be positive".into(),
            ));
        }
        let s = &self.simulator;
        if !(s.budget_fraction > 0.0 && s.budget_fraction <= 1.0) {
            return Err(CliError::Config(
                "budget_fraction must lie in (0, 1]".into(),
            ));
        }
        if s.seeds == 0 {
            return Err(CliError::Config("seeds must be at least 1".into()));
        }
        if s.tau_sweep.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::Config(
                "every tau in tau_sweep must be positive".into(),
            ));
        }
        if s.eval_cap == Some(0) {
            return Err(CliError::Config("eval_cap must be at least 1".into()));
        }
        if let PopulationSource::Symmetric { clusters: 0 } = s.population {
            return Err(CliError::Config(
                "a symmetric population needs at least one cluster".into(),
            ));
        }
        let a = &self.analysis;
        if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
            return Err(CliError::Config("lambda must be non-negative".into()));
        }
        if a.top_k == 0 || !(a.alpha > 0.0 && a.alpha <= 1.0) {
            return Err(CliError::Config(
                "top_k must be at least 1 and alpha in (0, 1]".into(),
            ));
        }
        if let Some(d) = a.projection_dims {
            if d == 0 || d > MAX_PROJECTION_DIMS {
                return Err(CliError::Config(format!(
                    "projection_dims must lie in 1..={MAX_PROJECTION_DIMS}"
                )));
            }
        }
        if !(self.engine.tau > 0.0 && self.engine.tau.is_finite()) {
            return Err(CliError::Config(format!(
                "tau must be positive, got {}",
                self.engine.tau
            )));
        }
        Ok(())
    }
}

/// Path from the config, or a validation error naming the missing key.
pub fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("data.{key} is required for this command")))
}
