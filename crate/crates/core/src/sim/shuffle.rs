use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{PolicyKind, SimOptions, SyntheticLearner, SyntheticPool, Tracker, TrajectoryLog};
use crate::data::SampleId;
use crate::engine::{softmax, BudgetLedger, EngineConfig, Phase, SelectionRound};
use crate::error::{config, Result};
use crate::seeds::{subsystem_rng, Subsystem};

/// A fixed training order: the warmup set, then rounds of ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySchedule {
    pub warmup: Vec<SampleId>,
    pub rounds: Vec<Vec<SampleId>>,
}

impl ReplaySchedule {
    pub fn len(&self) -> usize {
        self.warmup.len() + self.rounds.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.warmup
            .iter()
            .chain(self.rounds.iter().flatten())
            .copied()
    }
}

/// The schedule a live run actually followed.
pub fn ordered_schedule(log: &TrajectoryLog) -> ReplaySchedule {
    ReplaySchedule {
        warmup: log.warmup_ids.clone(),
        rounds: log.rounds.iter().map(|r| r.selected_ids.clone()).collect(),
    }
}

/// The same prioritized selections in a uniformly random order, cut into rounds of the
/// configured size. The warmup set stays first.
pub fn shuffle_order_ablation(log: &TrajectoryLog, seed: u64) -> ReplaySchedule {
    let mut ids: Vec<SampleId> = log.pcl_ids().collect();
    ids.shuffle(&mut subsystem_rng(seed, Subsystem::Shuffle));
    let size = log.config.round_size.max(1);
    ReplaySchedule {
        warmup: log.warmup_ids.clone(),
        rounds: ids.chunks(size).map(<[SampleId]>::to_vec).collect(),
    }
}

/// Trains a fresh learner on `schedule` in order, with the same checkpoints as a live run.
///
/// The recorded deltas and probabilities are what the progress policy would have computed;
/// they do not influence the schedule.
pub fn replay_schedule(
    learner: &SyntheticLearner,
    engine_config: &EngineConfig,
    pool: &SyntheticPool,
    schedule: &ReplaySchedule,
    seed: u64,
    options: SimOptions<'_>,
) -> Result<TrajectoryLog> {
    if schedule.len() > engine_config.budget_total {
        return Err(config(format!(
            "schedule of {} ids exceeds the budget of {}",
            schedule.len(),
            engine_config.budget_total
        )));
    }
    let config = EngineConfig {
        seed,
        ..engine_config.clone()
    };
    let mut ledger = BudgetLedger::new(config.budget_total);
    let mut tracker = Tracker::new(learner, pool, config.metric_kind, seed, options)?;
    ledger.charge(&schedule.warmup, Phase::Warmup)?;
    tracker.feed_warmup(&schedule.warmup, config.round_size)?;

    let k = pool.assignment().k();
    let mut rounds = Vec::with_capacity(schedule.rounds.len());
    for (i, ids) in schedule.rounds.iter().enumerate() {
        let deltas = tracker.deltas(config.epsilon)?;
        let probs = softmax(&deltas, config.tau)?;
        ledger.charge(ids, Phase::Pcl)?;
        let mut alloc = vec![0; k];
        for &id in ids {
            if let Some(c) = pool.cluster_of(id) {
                alloc[c] += 1;
            }
        }
        tracker.feed_round(ids)?;
        rounds.push(SelectionRound {
            round: i + 1,
            deltas,
            probs: probs.probs,
            alloc,
            explore_n: 0,
            selected_ids: ids.clone(),
            budget_spent: ledger.spent(),
            rng_digest: String::new(),
        });
    }
    Ok(tracker.finish(
        PolicyKind::Progress,
        seed,
        true,
        config,
        schedule.warmup.clone(),
        rounds,
        ledger,
    ))
}
