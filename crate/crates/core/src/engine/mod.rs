//! Prioritized selection: learning progress per cluster, temperature softmax over it,
//! round apportionment with random exploration, warmup, and budget accounting.

mod allocate;
mod ledger;
mod progress;
pub mod warmup;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::Assignment;
use crate::data::SampleId;
use crate::error::{config, validation, Error, Result};
use crate::seeds::{subsystem_rng, Subsystem};

pub use allocate::{
    allocate_round, apportion, available_counts, select_samples, Allocation, UnannotatedPool,
};
pub use ledger::{BudgetLedger, LedgerEntry, Phase};
pub use progress::{
    compute_delta, softmax, softmax_distribution, DeltaVector, MetricSnapshot, SamplingDistribution,
};
pub use warmup::{
    cluster_density, cluster_transferability, warmup_select, warmup_select_from_profile,
    warmup_size, WarmupProfile,
};

/// Which per-cluster quantity drives progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Accuracy in [0, 1]; higher is better.
    Accuracy,
    /// Mean loss, non-negative; lower is better.
    Loss,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(MetricKind::Accuracy),
            "loss" => Ok(MetricKind::Loss),
            other => Err(config(format!(
                "unknown metric '{other}' (accuracy | loss)"
            ))),
        }
    }
}

/// Selection hyperparameters. Defaults follow the LLaVA-665K setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub metric_kind: MetricKind,
    pub epsilon: f64,
    pub tau: f64,
    pub delta_explore: f64,
    pub batch_size: usize,
    /// Optimizer steps between checkpoints. When set, `round_size` must equal
    /// `gamma * batch_size`; when absent `round_size` stands on its own.
    pub gamma: Option<usize>,
    pub round_size: usize,
    pub budget_total: usize,
    pub warmup_ratio: f64,
    pub warmup_tau: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            metric_kind: MetricKind::Accuracy,
            epsilon: 0.01,
            tau: 1.0,
            delta_explore: 0.10,
            batch_size: 128,
            gamma: None,
            round_size: 7_500,
            budget_total: 0,
            warmup_ratio: 0.09,
            warmup_tau: 0.1,
            seed: 0,
        }
    }
}

impl EngineConfig {
    /// LLaVA-665K defaults with a budget of `budget_fraction` of the pool.
    pub fn llava_665k(pool_size: usize, budget_fraction: f64) -> Self {
        Self {
            budget_total: (pool_size as f64 * budget_fraction).floor() as usize,
            ..Self::default()
        }
    }

    /// Vision-Flan defaults with a budget of `budget_fraction` of the pool.
    pub fn vision_flan(pool_size: usize, budget_fraction: f64) -> Self {
        Self {
            round_size: 3_500,
            warmup_ratio: 0.084,
            ..Self::llava_665k(pool_size, budget_fraction)
        }
    }

    /// Checks every field; `pool_size` bounds the budget.
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(config("epsilon must be positive"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.warmup_tau > 0.0 && self.warmup_tau.is_finite()) {
            return Err(config("warmup_tau must be positive"));
        }
        if !(0.0..=1.0).contains(&self.delta_explore) {
            return Err(config("delta_explore must lie in [0, 1]"));
        }
        if self.round_size == 0 || self.batch_size == 0 {
            return Err(config("round_size and batch_size must be at least 1"));
        }
        if let Some(g) = self.gamma {
            if g * self.batch_size != self.round_size {
                return Err(config(format!(
                    "round_size {} != gamma {g} x batch_size {}",
                    self.round_size, self.batch_size
                )));
            }
        }
        if self.budget_total > pool_size {
            return Err(config(format!(
                "budget {} exceeds pool size {pool_size}",
                self.budget_total
            )));
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            return Err(config("warmup_ratio must lie in (0, 1)"));
        }
        let warm = warmup_size(pool_size, self.warmup_ratio);
        if warm > self.budget_total {
            return Err(config(format!(
                "warmup set of {warm} exceeds the budget of {}",
                self.budget_total
            )));
        }
        Ok(())
    }
}

/// One prioritized selection round, as written to the selection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    pub round: usize,
    pub deltas: Vec<f64>,
    pub probs: Vec<f64>,
    pub alloc: Vec<usize>,
    pub explore_n: usize,
    pub selected_ids: Vec<SampleId>,
    /// Total spend (warmup included) after this round.
    pub budget_spent: usize,
    /// Position of the selection RNG stream after the round.
    pub rng_digest: String,
}

pub fn write_selection_log(path: impl AsRef<Path>, rounds: &[SelectionRound]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rounds {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_selection_log(path: impl AsRef<Path>) -> Result<Vec<SelectionRound>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// The selection state machine: owns the unannotated pool, the ledger and the RNG.
///
/// Every id it hands out is charged to the ledger exactly once and removed from the pool.
#[derive(Debug, Clone)]
pub struct ProgressEngine {
    config: EngineConfig,
    pool_size: usize,
    pool: UnannotatedPool,
    ledger: BudgetLedger,
    annotated: HashSet<SampleId>,
    warmup_rng: ChaCha8Rng,
    round_rng: ChaCha8Rng,
    rounds: usize,
}

impl ProgressEngine {
    pub fn new(config: EngineConfig, assignment: &Assignment) -> Result<Self> {
        config.validate(assignment.len())?;
        Ok(Self {
            pool_size: assignment.len(),
            pool: UnannotatedPool::new(assignment, &HashSet::new()),
            ledger: BudgetLedger::new(config.budget_total),
            annotated: HashSet::new(),
            warmup_rng: subsystem_rng(config.seed, Subsystem::Warmup),
            round_rng: subsystem_rng(config.seed, Subsystem::Selection),
            rounds: 0,
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn k(&self) -> usize {
        self.pool.k()
    }

    pub fn available(&self) -> Vec<usize> {
        self.pool.available()
    }

    pub fn annotated(&self) -> &HashSet<SampleId> {
        &self.annotated
    }

    pub fn rounds_done(&self) -> usize {
        self.rounds
    }

    /// True once no further round can select anything.
    pub fn is_done(&self) -> bool {
        self.ledger.remaining() == 0 || self.pool.total() == 0
    }

    pub fn warmup(&mut self, profile: &WarmupProfile) -> Result<Vec<SampleId>> {
        let ids = warmup_select_from_profile(
            profile,
            &mut self.pool,
            self.pool_size,
            self.config.warmup_ratio,
            self.config.warmup_tau,
            &mut self.ledger,
            &mut self.warmup_rng,
        )?;
        self.mark(&ids)?;
        Ok(ids)
    }

    /// Warmup drawn over a different (usually finer) partition of the same pool; `profile`
    /// describes the clusters of `partition`.
    pub fn warmup_on(
        &mut self,
        profile: &WarmupProfile,
        partition: &Assignment,
    ) -> Result<Vec<SampleId>> {
        if partition.len() != self.pool_size || self.pool.total() != self.pool_size {
            return Err(validation("warmup partition must cover the untouched pool"));
        }
        let mut pool = UnannotatedPool::new(partition, &HashSet::new());
        if pool.total() != self.pool_size {
            return Err(validation("warmup partition must cover the untouched pool"));
        }
        let ids = warmup_select_from_profile(
            profile,
            &mut pool,
            self.pool_size,
            self.config.warmup_ratio,
            self.config.warmup_tau,
            &mut self.ledger,
            &mut self.warmup_rng,
        )?;
        let drawn: HashSet<SampleId> = ids.iter().copied().collect();
        let before = self.pool.total();
        self.pool.remove_ids(&drawn);
        if before - self.pool.total() != ids.len() {
            return Err(validation("warmup partition holds ids outside the pool"));
        }
        self.mark(&ids)?;
        Ok(ids)
    }

    /// A progress-driven round: softmax of `deltas` at the configured temperature.
    pub fn progress_round(&mut self, deltas: &DeltaVector<f64>) -> Result<Option<SelectionRound>> {
        let probs = softmax_distribution(deltas, self.config.tau)?;
        self.round_with(&deltas.values, &probs, self.config.delta_explore)
    }

    /// A round with an explicit cluster distribution and exploration fraction.
    ///
    /// Returns `None` once the budget or the pool is exhausted.
    pub fn round_with(
        &mut self,
        deltas: &[f64],
        probs: &SamplingDistribution<f64>,
        delta_explore: f64,
    ) -> Result<Option<SelectionRound>> {
        if self.is_done() {
            return Ok(None);
        }
        let alloc = allocate_round(
            probs,
            self.config.round_size,
            delta_explore,
            &self.pool.available(),
            self.ledger.remaining(),
        )?;
        let ids = self.pool.draw(&alloc, &mut self.round_rng)?;
        self.ledger.charge(&ids, Phase::Pcl)?;
        self.mark(&ids)?;
        self.rounds += 1;
        Ok(Some(SelectionRound {
            round: self.rounds,
            deltas: deltas.to_vec(),
            probs: probs.probs.clone(),
            alloc: alloc.per_cluster,
            explore_n: alloc.explore,
            selected_ids: ids,
            budget_spent: self.ledger.spent(),
            rng_digest: format!("{:032x}", self.round_rng.get_word_pos()),
        }))
    }

    fn mark(&mut self, ids: &[SampleId]) -> Result<()> {
        for &id in ids {
            if !self.annotated.insert(id) {
                return Err(Error::Internal(format!("sample {id} selected twice")));
            }
        }
        Ok(())
    }
}
