use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use progress_core::cluster::{read_assignment, Assignment, ClusterModel};
use progress_core::data::{read_embeddings, SampleId};
use progress_core::engine::{
    compute_delta, write_selection_log, DeltaVector, EngineConfig, ProgressEngine, WarmupProfile,
};
use progress_core::sim::{
    simulate_run_with, BudgetAudit, ExactMatchJudge, PolicyKind, SimOptions, SyntheticPool,
};
use progress_core::Snapshot;

use crate::cluster::unit_rows;
use crate::config::{require, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{OutDir, Provenance};

pub const TRAJECTORY: &str = "trajectory.jsonl";

#[derive(Debug, Serialize)]
struct SelectReport {
    mode: &'static str,
    policy: Option<PolicyKind>,
    trajectory: &'static str,
    rounds: usize,
    warmup_ids: Vec<SampleId>,
    budget: BudgetAudit,
    /// Synthetic learner only.
    final_accuracies: Option<Vec<f64>>,
    config: EngineConfig,
}

/// Warmup weights plus the partition they refer to, when it is not the selection partition.
struct Warmup {
    profile: Option<WarmupProfile>,
    partition: Option<Assignment>,
}

fn load_warmup(
    cfg: &RunConfig,
    assignment: &Assignment,
    prov: &mut Provenance,
) -> CliResult<Warmup> {
    let d = &cfg.data;
    let (centroids, partition) = match (&d.warmup_centroids, &d.warmup_assignment) {
        (Some(c), Some(a)) => {
            *prov = prov
                .clone()
                .input("warmup_centroids", c)
                .input("warmup_assignment", a);
            (c, Some(read_assignment(a, None)?))
        }
        (None, None) => match &d.centroids {
            Some(c) => {
                *prov = prov.clone().input("centroids", c);
                (c, None)
            }
            None => {
                return Ok(Warmup {
                    profile: None,
                    partition: None,
                })
            }
        },
        _ => {
            return Err(CliError::Config(
                "data.warmup_centroids and data.warmup_assignment go together".into(),
            ))
        }
    };
    let emb = require(&d.embeddings, "embeddings")?;
    *prov = prov.clone().input("embeddings", emb);
    let m = unit_rows(read_embeddings(emb)?, cfg.clustering.normalize)?;
    let model = ClusterModel::from_centroids(&read_embeddings(centroids)?)?;
    let labels = partition.as_ref().unwrap_or(assignment);
    if model.k() != labels.k() {
        return Err(CliError::Config(format!(
            "{} holds {} centroids for a partition of {} clusters",
            centroids.display(),
            model.k(),
            labels.k()
        )));
    }
    let profile = WarmupProfile::from_model(&m, labels, &model)?;
    Ok(Warmup {
        profile: Some(profile),
        partition,
    })
}

fn read_snapshots(path: &Path, cfg: &EngineConfig, k: usize) -> CliResult<Vec<Snapshot>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out: Vec<Snapshot> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Snapshot = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        s.validate(cfg.metric_kind)?;
        if s.k() != k {
            return Err(CliError::Config(format!(
                "{}:{}: snapshot covers {} clusters, the assignment {k}",
                path.display(),
                i + 1,
                s.k()
            )));
        }
        out.push(s);
    }
    Ok(out)
}

/// Round `r` reads progress between snapshots `r` and `r + 1`; once they run out the last
/// pair is reused. Fewer than two snapshots give no progress signal at all.
fn deltas_for_round(
    snaps: &[Snapshot],
    r: usize,
    cfg: &EngineConfig,
    k: usize,
) -> CliResult<DeltaVector<f64>> {
    if snaps.len() < 2 {
        return Ok(DeltaVector::zeros(k, cfg.metric_kind));
    }
    let i = (r + 1).min(snaps.len() - 1);
    Ok(compute_delta(
        &snaps[i],
        &snaps[i - 1],
        cfg.epsilon,
        cfg.metric_kind,
    )?)
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let mut prov = Provenance::new("select");
    let d = &cfg.data;
    let given = match &d.assignment {
        Some(p) => {
            prov = prov.input("assignment", p);
            Some(read_assignment(p, None)?)
        }
        None => None,
    };

    let report = if let Some(snap_path) = &d.snapshots {
        let assignment =
            given.ok_or_else(|| CliError::Config("snapshot mode needs data.assignment".into()))?;
        prov = prov.input("snapshots", snap_path);
        let engine_cfg = resolve_budget(cfg, assignment.len());
        engine_cfg.validate(assignment.len())?;
        let snaps = read_snapshots(snap_path, &engine_cfg, assignment.k())?;
        let warm = load_warmup(cfg, &assignment, &mut prov)?;

        let mut engine = ProgressEngine::new(engine_cfg.clone(), &assignment)?;
        let profile = warm
            .profile
            .unwrap_or_else(|| WarmupProfile::neutral(&assignment.sizes()));
        let warmup_ids = match &warm.partition {
            Some(p) => engine.warmup_on(&profile, p)?,
            None => engine.warmup(&profile)?,
        };
        let mut rounds = Vec::new();
        while !engine.is_done() {
            let deltas = deltas_for_round(&snaps, rounds.len(), &engine_cfg, assignment.k())?;
            match engine.progress_round(&deltas)? {
                Some(r) => rounds.push(r),
                None => break,
            }
        }
        write_selection_log(out.path(TRAJECTORY), &rounds)?;
        let l = engine.ledger();
        SelectReport {
            mode: "snapshots",
            policy: None,
            trajectory: TRAJECTORY,
            rounds: rounds.len(),
            warmup_ids,
            budget: BudgetAudit {
                total: l.budget_total(),
                warmup_spent: l.warmup_spent(),
                pcl_spent: l.pcl_spent(),
                remaining: l.remaining(),
            },
            final_accuracies: None,
            config: engine_cfg,
        }
    } else {
        let spec = cfg.simulator.population.resolve()?;
        let pop = spec.build(cfg.engine.seed)?;
        let pool = match given {
            Some(a) => {
                if a.k() != pop.learner.k() {
                    return Err(CliError::Config(format!(
                        "the simulated population has {} clusters, the assignment {}",
                        pop.learner.k(),
                        a.k()
                    )));
                }
                SyntheticPool::new(a, cfg.engine.seed)
            }
            None => pop.pool.clone(),
        };
        let engine_cfg = resolve_budget(cfg, pool.len());
        engine_cfg.validate(pool.len())?;
        let warm = load_warmup(cfg, pool.assignment(), &mut prov)?;
        let options = SimOptions {
            judge: &ExactMatchJudge,
            eval_cap: cfg.simulator.eval_cap,
            warmup_profile: warm.profile.as_ref(),
            warmup_partition: warm.partition.as_ref(),
        };
        let policy = cfg.simulator.policy;
        let log = simulate_run_with(
            &pop.learner,
            &engine_cfg,
            policy,
            &pool,
            engine_cfg.seed,
            options,
        )?;
        log.check_consistency()?;
        log.write_jsonl(out.path(TRAJECTORY))?;
        SelectReport {
            mode: "simulator",
            policy: Some(policy),
            trajectory: TRAJECTORY,
            rounds: log.rounds.len(),
            budget: log.budget_audit(),
            final_accuracies: Some(log.final_accuracies.clone()),
            warmup_ids: log.warmup_ids,
            config: log.config,
        }
    };
    log::info!(
        "{} rounds, {} of {} spent",
        report.rounds,
        report.budget.warmup_spent + report.budget.pcl_spent,
        report.budget.total
    );
    out.write_report("selection.json", &prov, &report)?;
    Ok(())
}

/// The configured budget, or `budget_fraction` of the pool when none is set.
pub fn resolve_budget(cfg: &RunConfig, pool: usize) -> EngineConfig {
    let mut e = cfg.engine.clone();
    if e.budget_total == 0 {
        e.budget_total = (pool as f64 * cfg.simulator.budget_fraction).floor() as usize;
    }
    e
}
