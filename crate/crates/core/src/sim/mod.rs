//! Closed-loop simulation: a synthetic learner trained on whatever the selection policy picks,
//! evaluated at every checkpoint over the samples it has seen.

mod judge;
mod learner;
mod population;
mod shuffle;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::Assignment;
use crate::data::SampleId;
use crate::engine::{
    compute_delta, softmax, write_selection_log, BudgetLedger, EngineConfig, MetricKind,
    MetricSnapshot, ProgressEngine, SamplingDistribution, SelectionRound, WarmupProfile,
};
use crate::error::{config, validation, Error, Result};
use crate::seeds::{subsystem_rng, Subsystem};

pub use judge::{normalize_answer, ExactMatchJudge, Judge, ACCURACY_JUDGE_PROMPT};
pub use learner::{Prerequisite, SkillCurve, SyntheticLearner};
pub use population::{Population, PopulationSpec, PrerequisiteSpec, TierSpec};
pub use shuffle::{ordered_schedule, replay_schedule, shuffle_order_ablation, ReplaySchedule};

/// Answer the simulated model gives when it gets a sample wrong.
const WRONG_ANSWER: &str = "I am not sure";

/// The unannotated pool as the simulator sees it: cluster membership, a hidden reference
/// answer per sample, and a fixed per-sample difficulty draw `u` in `[0, 1)`. The learner
/// answers a sample correctly iff `u` is below its current accuracy on the sample's cluster.
#[derive(Debug, Clone)]
pub struct SyntheticPool {
    assignment: Assignment,
    index: HashMap<SampleId, usize>,
    difficulty: Vec<f64>,
}

impl SyntheticPool {
    pub fn new(assignment: Assignment, seed: u64) -> Self {
        Self::from_rng(assignment, &mut subsystem_rng(seed, Subsystem::Learner))
    }

    pub fn from_rng<R: Rng + ?Sized>(assignment: Assignment, rng: &mut R) -> Self {
        let difficulty = (0..assignment.len()).map(|_| rng.random::<f64>()).collect();
        let index = assignment
            .ids()
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        Self {
            assignment,
            index,
            difficulty,
        }
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn cluster_of(&self, id: SampleId) -> Option<usize> {
        self.index
            .get(&id)
            .map(|&i| self.assignment.labels()[i] as usize)
    }

    fn position(&self, id: SampleId) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| validation(format!("sample {id} is not in the pool")))
    }

    pub fn reference(&self, id: SampleId) -> String {
        format!("answer {id}")
    }

    /// What the learner says for sample `id` given per-cluster accuracies.
    pub fn predict(&self, accuracies: &[f64], id: SampleId) -> Result<String> {
        let i = self.position(id)?;
        let c = self.assignment.labels()[i] as usize;
        Ok(if self.difficulty[i] < accuracies[c] {
            format!("Answer {id}.")
        } else {
            WRONG_ANSWER.to_string()
        })
    }
}

/// Per-cluster metric over the annotated samples seen so far.
///
/// With `cap`, only the most recent `cap` samples of each cluster are evaluated. In loss mode the
/// value is the learner's negative log-likelihood proxy `-ln(0.01 + 0.99 * acc)`, which needs no
/// judge.
pub fn evaluate_snapshot(
    learner: &SyntheticLearner,
    pool: &SyntheticPool,
    annotated: &[SampleId],
    judge: &dyn Judge,
    kind: MetricKind,
    step: u64,
    cap: Option<usize>,
) -> Result<MetricSnapshot<f64>> {
    let k = pool.assignment.k();
    if learner.k() != k {
        return Err(validation(format!(
            "learner models {} clusters but the pool has {k}",
            learner.k()
        )));
    }
    let acc = learner.accuracies();
    let mut seen: Vec<Vec<SampleId>> = vec![Vec::new(); k];
    for &id in annotated {
        let c = pool
            .cluster_of(id)
            .ok_or_else(|| validation(format!("sample {id} is not in the pool")))?;
        seen[c].push(id);
    }
    let mut values = vec![0.0; k];
    let mut support = vec![0; k];
    for c in 0..k {
        let ids = match cap {
            Some(cap) if seen[c].len() > cap => &seen[c][seen[c].len() - cap..],
            _ => &seen[c][..],
        };
        support[c] = ids.len();
        if ids.is_empty() {
            continue;
        }
        values[c] = match kind {
            MetricKind::Accuracy => {
                let mut correct = 0usize;
                for &id in ids {
                    if judge.judge(&pool.predict(&acc, id)?, &pool.reference(id)) {
                        correct += 1;
                    }
                }
                correct as f64 / ids.len() as f64
            }
            MetricKind::Loss => -(0.01 + 0.99 * acc[c]).ln(),
        };
    }
    MetricSnapshot::new(step, values, support, kind)
}

/// Cluster scoring rule used to pick samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Progress,
    Random,
    Easiest,
    Medium,
    Hardest,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Progress,
        PolicyKind::Random,
        PolicyKind::Easiest,
        PolicyKind::Medium,
        PolicyKind::Hardest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Progress => "progress",
            PolicyKind::Random => "random",
            PolicyKind::Easiest => "easiest",
            PolicyKind::Medium => "medium",
            PolicyKind::Hardest => "hardest",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| config(format!("unknown policy '{s}'")))
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scores each policy feeds to the softmax, from current accuracy estimates.
pub fn baseline_scores(policy: PolicyKind, accuracy: &[f64]) -> Vec<f64> {
    match policy {
        PolicyKind::Easiest => accuracy.to_vec(),
        PolicyKind::Hardest => accuracy.iter().map(|a| -a).collect(),
        PolicyKind::Medium => {
            let m = median(accuracy);
            accuracy.iter().map(|a| -(a - m).abs()).collect()
        }
        PolicyKind::Progress | PolicyKind::Random => vec![0.0; accuracy.len()],
    }
}

/// Knobs of a simulated run beyond the engine configuration.
#[derive(Clone, Copy)]
pub struct SimOptions<'a> {
    pub judge: &'a dyn Judge,
    /// Most recent samples per cluster evaluated at each checkpoint; `None` evaluates all.
    pub eval_cap: Option<usize>,
    /// Warmup weights; `None` weights every non-empty cluster equally.
    pub warmup_profile: Option<&'a WarmupProfile>,
    /// Partition the warmup profile refers to, when it is not the pool's own.
    pub warmup_partition: Option<&'a Assignment>,
}

impl Default for SimOptions<'static> {
    fn default() -> Self {
        Self {
            judge: &ExactMatchJudge,
            eval_cap: None,
            warmup_profile: None,
            warmup_partition: None,
        }
    }
}

/// Everything a simulated run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub policy: PolicyKind,
    pub seed: u64,
    /// True for a replay of a fixed schedule rather than a live run.
    pub replay: bool,
    pub config: EngineConfig,
    pub warmup_ids: Vec<SampleId>,
    pub rounds: Vec<SelectionRound>,
    /// Estimated metrics at each checkpoint: one round before the end of warmup, after warmup,
    /// and after every round.
    pub snapshots: Vec<MetricSnapshot<f64>>,
    /// The learner's true per-cluster accuracy at the same checkpoints.
    pub true_accuracy: Vec<Vec<f64>>,
    pub final_accuracies: Vec<f64>,
    pub ledger: BudgetLedger,
}

/// Budget figures reported alongside a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub total: usize,
    pub warmup_spent: usize,
    pub pcl_spent: usize,
    pub remaining: usize,
}

/// Compact per-run summary written next to the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub seed: u64,
    pub replay: bool,
    pub rounds: usize,
    pub final_accuracies: Vec<f64>,
    pub mean_final_accuracy: f64,
    pub budget: BudgetAudit,
    pub config: EngineConfig,
}

impl TrajectoryLog {
    pub fn mean_final_accuracy(&self) -> f64 {
        mean(&self.final_accuracies)
    }

    pub fn budget_audit(&self) -> BudgetAudit {
        BudgetAudit {
            total: self.ledger.budget_total(),
            warmup_spent: self.ledger.warmup_spent(),
            pcl_spent: self.ledger.pcl_spent(),
            remaining: self.ledger.remaining(),
        }
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            policy: self.policy,
            seed: self.seed,
            replay: self.replay,
            rounds: self.rounds.len(),
            final_accuracies: self.final_accuracies.clone(),
            mean_final_accuracy: self.mean_final_accuracy(),
            budget: self.budget_audit(),
            config: self.config.clone(),
        }
    }

    /// Every id selected in prioritized rounds, in selection order.
    pub fn pcl_ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.rounds
            .iter()
            .flat_map(|r| r.selected_ids.iter().copied())
    }

    /// Number of prioritized selections that landed in each cluster.
    pub fn pcl_cluster_counts(&self, pool: &SyntheticPool) -> Vec<usize> {
        let mut counts = vec![0; pool.assignment.k()];
        for id in self.pcl_ids() {
            if let Some(c) = pool.cluster_of(id) {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Fraction of prioritized selections taken by the most selected cluster.
    pub fn top1_share(&self, pool: &SyntheticPool) -> f64 {
        let counts = self.pcl_cluster_counts(pool);
        let total: usize = counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        *counts.iter().max().unwrap() as f64 / total as f64
    }

    /// Rounds strictly ordered, spend matching ids, no id selected twice.
    pub fn check_consistency(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for id in self
            .warmup_ids
            .iter()
            .chain(self.pcl_ids().collect::<Vec<_>>().iter())
        {
            if !seen.insert(*id) {
                return Err(Error::Integrity(format!("sample {id} selected twice")));
            }
        }
        let mut spent = self.warmup_ids.len();
        for (i, r) in self.rounds.iter().enumerate() {
            if r.round != i + 1 {
                return Err(Error::Integrity(format!("round {} out of order", r.round)));
            }
            spent += r.selected_ids.len();
            if r.budget_spent != spent {
                return Err(Error::Integrity(format!(
                    "round {}: spend mismatch",
                    r.round
                )));
            }
        }
        if spent != self.ledger.spent() || spent > self.ledger.budget_total() {
            return Err(Error::Integrity(
                "ledger disagrees with the selections".into(),
            ));
        }
        if self.snapshots.len() != self.rounds.len() + 2 {
            return Err(Error::Integrity(
                "one snapshot per checkpoint expected".into(),
            ));
        }
        Ok(())
    }

    /// Round log as JSONL, one round per line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_selection_log(path, &self.rounds)
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, &self.summary())
    }
}

pub(crate) fn write_json<S: Serialize>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Learner state plus the checkpoint history, shared by live runs and replays.
///
/// Each batch handed to the learner is trained in a shuffled order drawn from the run's
/// training stream, as a data loader would.
pub(crate) struct Tracker<'a> {
    pool: &'a SyntheticPool,
    learner: SyntheticLearner,
    options: SimOptions<'a>,
    kind: MetricKind,
    rng: ChaCha8Rng,
    seen: Vec<SampleId>,
    snapshots: Vec<MetricSnapshot<f64>>,
    accuracy_estimates: Vec<f64>,
    truth: Vec<Vec<f64>>,
}

impl<'a> Tracker<'a> {
    pub(crate) fn new(
        learner: &SyntheticLearner,
        pool: &'a SyntheticPool,
        kind: MetricKind,
        seed: u64,
        options: SimOptions<'a>,
    ) -> Result<Self> {
        if learner.k() != pool.assignment.k() {
            return Err(validation(format!(
                "learner models {} clusters but the pool has {}",
                learner.k(),
                pool.assignment.k()
            )));
        }
        Ok(Self {
            pool,
            learner: learner.reset(),
            options,
            kind,
            rng: subsystem_rng(seed, Subsystem::Training),
            seen: Vec::new(),
            snapshots: Vec::new(),
            accuracy_estimates: Vec::new(),
            truth: Vec::new(),
        })
    }

    fn train(&mut self, ids: &[SampleId]) -> Result<()> {
        for &id in ids {
            let c = self
                .pool
                .cluster_of(id)
                .ok_or_else(|| validation(format!("sample {id} is not in the pool")))?;
            self.learner.train(c);
            self.seen.push(id);
        }
        Ok(())
    }

    fn shuffled(&mut self, ids: &[SampleId]) -> Vec<SampleId> {
        let mut order = ids.to_vec();
        order.shuffle(&mut self.rng);
        order
    }

    /// Trains the warmup set with a checkpoint one round before its end and one after it, so
    /// the first prioritized round already has two checkpoints to compare.
    pub(crate) fn feed_warmup(&mut self, ids: &[SampleId], round_size: usize) -> Result<()> {
        let order = self.shuffled(ids);
        let split = order.len().saturating_sub(round_size);
        self.train(&order[..split])?;
        self.checkpoint()?;
        self.train(&order[split..])?;
        self.checkpoint()
    }

    /// Trains one round and checkpoints.
    pub(crate) fn feed_round(&mut self, ids: &[SampleId]) -> Result<()> {
        let order = self.shuffled(ids);
        self.train(&order)?;
        self.checkpoint()
    }

    fn checkpoint(&mut self) -> Result<()> {
        let step = self.snapshots.len() as u64;
        let eval = |kind| {
            evaluate_snapshot(
                &self.learner,
                self.pool,
                &self.seen,
                self.options.judge,
                kind,
                step,
                self.options.eval_cap,
            )
        };
        let snap = eval(self.kind)?;
        self.accuracy_estimates = match self.kind {
            MetricKind::Accuracy => snap.values.clone(),
            MetricKind::Loss => eval(MetricKind::Accuracy)?.values,
        };
        self.snapshots.push(snap);
        self.truth.push(self.learner.accuracies());
        Ok(())
    }

    /// Progress between the two latest checkpoints.
    pub(crate) fn deltas(&self, epsilon: f64) -> Result<Vec<f64>> {
        let n = self.snapshots.len();
        if n < 2 {
            return Ok(vec![0.0; self.learner.k()]);
        }
        Ok(compute_delta(
            &self.snapshots[n - 1],
            &self.snapshots[n - 2],
            epsilon,
            self.kind,
        )?
        .values)
    }

    pub(crate) fn finish(
        self,
        policy: PolicyKind,
        seed: u64,
        replay: bool,
        config: EngineConfig,
        warmup_ids: Vec<SampleId>,
        rounds: Vec<SelectionRound>,
        ledger: BudgetLedger,
    ) -> TrajectoryLog {
        TrajectoryLog {
            policy,
            seed,
            replay,
            config,
            warmup_ids,
            rounds,
            final_accuracies: self.learner.accuracies(),
            snapshots: self.snapshots,
            true_accuracy: self.truth,
            ledger,
        }
    }
}

/// [`simulate_run_with`] using exact-match judging, neutral warmup weights and no eval cap.
pub fn simulate_run(
    learner: &SyntheticLearner,
    engine_config: &EngineConfig,
    policy: PolicyKind,
    pool: &SyntheticPool,
    seed: u64,
) -> Result<TrajectoryLog> {
    simulate_run_with(
        learner,
        engine_config,
        policy,
        pool,
        seed,
        SimOptions::default(),
    )
}

/// Warmup, then rounds of evaluate, score, allocate, select, charge and train until the
/// budget or the pool runs out. `seed` replaces the seed in `engine_config`.
pub fn simulate_run_with(
    learner: &SyntheticLearner,
    engine_config: &EngineConfig,
    policy: PolicyKind,
    pool: &SyntheticPool,
    seed: u64,
    options: SimOptions<'_>,
) -> Result<TrajectoryLog> {
    let config = EngineConfig {
        seed,
        ..engine_config.clone()
    };
    let mut engine = ProgressEngine::new(config.clone(), &pool.assignment)?;
    let mut tracker = Tracker::new(learner, pool, config.metric_kind, seed, options)?;

    let neutral;
    let profile = match options.warmup_profile {
        Some(p) => p,
        None => {
            neutral = WarmupProfile::neutral(&pool.assignment.sizes());
            &neutral
        }
    };
    let warmup_ids = match options.warmup_partition {
        Some(partition) => engine.warmup_on(profile, partition)?,
        None => engine.warmup(profile)?,
    };
    tracker.feed_warmup(&warmup_ids, config.round_size)?;

    let k = pool.assignment.k();
    let mut rounds = Vec::new();
    while !engine.is_done() {
        let deltas = tracker.deltas(config.epsilon)?;
        let (probs, explore) = match policy {
            PolicyKind::Progress => (softmax(&deltas, config.tau)?, config.delta_explore),
            PolicyKind::Random => (SamplingDistribution::uniform(k), 1.0),
            _ => (
                softmax(
                    &baseline_scores(policy, &tracker.accuracy_estimates),
                    config.tau,
                )?,
                config.delta_explore,
            ),
        };
        let Some(round) = engine.round_with(&deltas, &probs, explore)? else {
            break;
        };
        tracker.feed_round(&round.selected_ids)?;
        rounds.push(round);
    }
    let ledger = engine.ledger().clone();
    Ok(tracker.finish(policy, seed, false, config, warmup_ids, rounds, ledger))
}
