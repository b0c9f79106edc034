use rayon::prelude::*;
use serde::Serialize;

use progress_core::engine::EngineConfig;
use progress_core::sim::{
    replay_schedule, shuffle_order_ablation, simulate_run_with, BudgetAudit, ExactMatchJudge,
    PolicyKind, Population, SimOptions, TrajectoryLog,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{OutDir, Provenance};
use crate::select::resolve_budget;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Variant {
    Policy(PolicyKind),
    Shuffled,
    Tau(f64),
}

impl Variant {
    fn file(self, seed: u64) -> String {
        match self {
            Variant::Policy(p) => format!("{p}_seed{seed}.jsonl"),
            Variant::Shuffled => format!("progress_shuffled_seed{seed}.jsonl"),
            Variant::Tau(t) => format!("progress_tau{t}_seed{seed}.jsonl"),
        }
    }
}

struct SeedRuns {
    seed: u64,
    pop: Population,
    runs: Vec<(Variant, TrajectoryLog)>,
}

#[derive(Debug, Serialize)]
struct TierCurve {
    tier: String,
    /// Mean true accuracy over the tier's clusters at each checkpoint, averaged over seeds.
    curve: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PolicySummary {
    policy: PolicyKind,
    mean_final_accuracy: f64,
    std_final_accuracy: f64,
    per_seed: Vec<f64>,
    mean_top1_share: f64,
    tier_curves: Vec<TierCurve>,
}

#[derive(Debug, Serialize)]
struct Comparison {
    policy: PolicyKind,
    /// Mean over seeds of (progress - policy).
    mean_difference: f64,
    /// Paired t statistic; absent with fewer than two seeds or identical differences.
    t_statistic: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TauSummary {
    tau: f64,
    mean_final_accuracy: f64,
    mean_top1_share: f64,
}

#[derive(Debug, Serialize)]
struct ShuffleSummary {
    ordered_mean: f64,
    shuffled_mean: f64,
    per_seed: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct RunEntry {
    file: String,
    policy: PolicyKind,
    seed: u64,
    tau: f64,
    replay: bool,
    rounds: usize,
    mean_final_accuracy: f64,
    top1_share: f64,
    budget: BudgetAudit,
}

#[derive(Debug, Serialize)]
struct PopulationInfo {
    clusters: usize,
    pool_size: usize,
    tiers: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    population: PopulationInfo,
    seeds: Vec<u64>,
    engine: EngineConfig,
    policies: Vec<PolicySummary>,
    comparisons: Vec<Comparison>,
    tau_sweep: Vec<TauSummary>,
    shuffle_ablation: Option<ShuffleSummary>,
    runs: Vec<RunEntry>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn paired_t(diffs: &[f64]) -> Option<f64> {
    let s = sample_std(diffs);
    (diffs.len() >= 2 && s > 0.0).then(|| mean(diffs) / (s / (diffs.len() as f64).sqrt()))
}

fn run_seed(cfg: &RunConfig, engine: &EngineConfig, seed: u64) -> CliResult<SeedRuns> {
    let s = &cfg.simulator;
    let pop = s.population.resolve()?.build(seed)?;
    let options = SimOptions {
        judge: &ExactMatchJudge,
        eval_cap: s.eval_cap,
        warmup_profile: None,
        warmup_partition: None,
    };
    let mut runs = Vec::new();
    for &policy in &s.policies {
        let log = simulate_run_with(&pop.learner, engine, policy, &pop.pool, seed, options)?;
        log.check_consistency()?;
        if policy == PolicyKind::Progress && s.shuffle_ablation {
            let schedule = shuffle_order_ablation(&log, seed);
            let replay = replay_schedule(
                &pop.learner,
                &log.config,
                &pop.pool,
                &schedule,
                seed,
                options,
            )?;
            runs.push((Variant::Policy(policy), log));
            runs.push((Variant::Shuffled, replay));
        } else {
            runs.push((Variant::Policy(policy), log));
        }
    }
    for &tau in &s.tau_sweep {
        let at = EngineConfig {
            tau,
            ..engine.clone()
        };
        let log = simulate_run_with(
            &pop.learner,
            &at,
            PolicyKind::Progress,
            &pop.pool,
            seed,
            options,
        )?;
        runs.push((Variant::Tau(tau), log));
    }
    Ok(SeedRuns { seed, pop, runs })
}

fn mean_curves(curves: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|t| {
            let len = curves.iter().map(|c| c[t].len()).min().unwrap_or(0);
            (0..len)
                .map(|i| mean(&curves.iter().map(|c| c[t][i]).collect::<Vec<_>>()))
                .collect()
        })
        .collect()
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let s = &cfg.simulator;
    if s.policies.is_empty() {
        return Err(CliError::Config(
            "simulate needs at least one policy".into(),
        ));
    }
    if s.shuffle_ablation && !s.policies.contains(&PolicyKind::Progress) {
        return Err(CliError::Config(
            "the shuffle ablation replays progress runs; add the progress policy".into(),
        ));
    }
    let spec = s.population.resolve()?;
    spec.validate()?;
    let engine = resolve_budget(cfg, spec.pool_size());
    engine.validate(spec.pool_size())?;
    let prov = match &s.population {
        crate::config::PopulationSource::File { path } => {
            Provenance::new("simulate").input("population", path)
        }
        _ => Provenance::new("simulate"),
    };

    let seeds: Vec<u64> = (0..s.seeds as u64).map(|i| s.seed_offset + i).collect();
    let results: Vec<SeedRuns> = seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &engine, seed))
        .collect::<CliResult<_>>()?;

    let dir = out.subdir("runs")?;
    let mut entries = Vec::new();
    for sr in &results {
        for (variant, log) in &sr.runs {
            let file = variant.file(sr.seed);
            log.write_jsonl(dir.join(&file))?;
            entries.push(RunEntry {
                file: format!("runs/{file}"),
                policy: log.policy,
                seed: sr.seed,
                tau: log.config.tau,
                replay: log.replay,
                rounds: log.rounds.len(),
                mean_final_accuracy: log.mean_final_accuracy(),
                top1_share: log.top1_share(&sr.pop.pool),
                budget: log.budget_audit(),
            });
        }
    }

    let logs_of = |v: Variant| -> Vec<(&Population, &TrajectoryLog)> {
        results
            .iter()
            .filter_map(|sr| {
                sr.runs
                    .iter()
                    .find(|(x, _)| *x == v)
                    .map(|(_, l)| (&sr.pop, l))
            })
            .collect()
    };
    let tier_names = results
        .first()
        .map(|r| r.pop.tier_names.clone())
        .unwrap_or_default();
    let policies: Vec<PolicySummary> = s
        .policies
        .iter()
        .map(|&p| {
            let logs = logs_of(Variant::Policy(p));
            let per_seed: Vec<f64> = logs.iter().map(|(_, l)| l.mean_final_accuracy()).collect();
            let shares: Vec<f64> = logs
                .iter()
                .map(|(pop, l)| l.top1_share(&pop.pool))
                .collect();
            let curves: Vec<Vec<Vec<f64>>> =
                logs.iter().map(|(pop, l)| pop.tier_curves(l)).collect();
            PolicySummary {
                policy: p,
                mean_final_accuracy: mean(&per_seed),
                std_final_accuracy: sample_std(&per_seed),
                mean_top1_share: mean(&shares),
                tier_curves: tier_names
                    .iter()
                    .cloned()
                    .zip(mean_curves(&curves))
                    .map(|(tier, curve)| TierCurve { tier, curve })
                    .collect(),
                per_seed,
            }
        })
        .collect();

    let comparisons = match policies.iter().find(|p| p.policy == PolicyKind::Progress) {
        Some(base) => policies
            .iter()
            .filter(|p| p.policy != PolicyKind::Progress)
            .map(|p| {
                let diffs: Vec<f64> = base
                    .per_seed
                    .iter()
                    .zip(&p.per_seed)
                    .map(|(a, b)| a - b)
                    .collect();
                Comparison {
                    policy: p.policy,
                    mean_difference: mean(&diffs),
                    t_statistic: paired_t(&diffs),
                }
            })
            .collect(),
        None => Vec::new(),
    };

    let tau_sweep = s
        .tau_sweep
        .iter()
        .map(|&tau| {
            let logs = logs_of(Variant::Tau(tau));
            TauSummary {
                tau,
                mean_final_accuracy: mean(
                    &logs
                        .iter()
                        .map(|(_, l)| l.mean_final_accuracy())
                        .collect::<Vec<_>>(),
                ),
                mean_top1_share: mean(
                    &logs
                        .iter()
                        .map(|(pop, l)| l.top1_share(&pop.pool))
                        .collect::<Vec<_>>(),
                ),
            }
        })
        .collect();

    let shuffle_ablation = s.shuffle_ablation.then(|| {
        let ordered = logs_of(Variant::Policy(PolicyKind::Progress));
        let shuffled = logs_of(Variant::Shuffled);
        let per_seed: Vec<[f64; 2]> = ordered
            .iter()
            .zip(&shuffled)
            .map(|((_, a), (_, b))| [a.mean_final_accuracy(), b.mean_final_accuracy()])
            .collect();
        ShuffleSummary {
            ordered_mean: mean(&per_seed.iter().map(|p| p[0]).collect::<Vec<_>>()),
            shuffled_mean: mean(&per_seed.iter().map(|p| p[1]).collect::<Vec<_>>()),
            per_seed,
        }
    });

    for p in &policies {
        log::info!(
            "{}: mean final accuracy {:.4}",
            p.policy,
            p.mean_final_accuracy
        );
    }
    let summary = SimulateSummary {
        population: PopulationInfo {
            clusters: spec.clusters(),
            pool_size: spec.pool_size(),
            tiers: tier_names,
        },
        seeds,
        engine,
        policies,
        comparisons,
        tau_sweep,
        shuffle_ablation,
        runs: entries,
    };
    out.write_report("summary.json", &prov, &summary)?;
    Ok(())
}
