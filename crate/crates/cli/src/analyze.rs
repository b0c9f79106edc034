use serde::Serialize;

use progress_core::analysis::{
    align_labels, assign_ability, assign_rarity, compute_difficulty, fit_benchmark_gaussians,
    read_ability_labels, read_scores, AbilityAssignment, DifficultyScore, PcaProjection,
    RarityReport,
};
use progress_core::cluster::read_assignment;
use progress_core::data::read_embeddings;
use progress_core::Embeddings64;

use crate::cluster::unit_rows;
use crate::config::{require, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{OutDir, Provenance};

#[derive(Serialize)]
struct RarityOut<'a> {
    rarity: &'a RarityReport,
}

#[derive(Serialize)]
struct AbilityOut<'a> {
    ability: &'a AbilityAssignment,
}

#[derive(Serialize)]
struct DifficultyOut<'a> {
    difficulty: &'a [DifficultyScore],
}

pub fn rarity(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let d = &cfg.data;
    let a = &cfg.analysis;
    let train_path = require(&d.embeddings, "embeddings")?;
    if d.benchmarks.is_empty() {
        return Err(CliError::Config(
            "rarity needs at least one entry in data.benchmarks".into(),
        ));
    }
    let mut prov = Provenance::new("analyze rarity").input("embeddings", train_path);
    let train: Embeddings64 = read_embeddings(train_path)?.cast();
    let mut benches: Vec<(String, Embeddings64)> = Vec::with_capacity(d.benchmarks.len());
    for b in &d.benchmarks {
        prov = prov.input(&format!("benchmark:{}", b.name), &b.embeddings);
        benches.push((b.name.clone(), read_embeddings(&b.embeddings)?.cast()));
    }

    let (train, benches) = match a.projection_dims {
        Some(dims) => {
            let sources: Vec<&Embeddings64> = benches.iter().map(|(_, m)| m).collect();
            let pca = PcaProjection::fit(&sources, dims)?;
            let projected = benches
                .iter()
                .map(|(n, m)| Ok((n.clone(), pca.project(m)?)))
                .collect::<CliResult<Vec<_>>>()?;
            (pca.project(&train)?, projected)
        }
        None => (train, benches),
    };
    let models = fit_benchmark_gaussians(&benches, a.lambda)?;
    let mut report = assign_rarity(&train, &models, a.rarity_mode)?;
    report.projection_dims = a.projection_dims;
    if report.tie_events > 0 {
        log::warn!("{} samples tied between benchmarks", report.tie_events);
    }
    out.write_report("rarity.json", &prov, &RarityOut { rarity: &report })?;
    Ok(())
}

pub fn ability(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let d = &cfg.data;
    let emb = require(&d.embeddings, "embeddings")?;
    let asg = require(&d.assignment, "assignment")?;
    let bench_path = require(&d.benchmark_embeddings, "benchmark_embeddings")?;
    let labels_path = require(&d.ability_labels, "ability_labels")?;
    let prov = Provenance::new("analyze ability")
        .input("embeddings", emb)
        .input("assignment", asg)
        .input("benchmark_embeddings", bench_path)
        .input("ability_labels", labels_path);

    let labels = read_ability_labels(labels_path)?;
    if labels.is_empty() {
        return Err(CliError::Config(format!(
            "{} holds no ability labels",
            labels_path.display()
        )));
    }
    let normalize = cfg.clustering.normalize;
    let samples: Embeddings64 = unit_rows(read_embeddings(emb)?, normalize)?.cast();
    let bench: Embeddings64 = unit_rows(read_embeddings(bench_path)?, normalize)?.cast();
    let assignment = read_assignment(asg, None)?;
    let aligned = align_labels(&bench, &labels)?;
    let result = assign_ability(
        &samples,
        &assignment,
        &bench,
        &aligned,
        cfg.analysis.top_k,
        cfg.analysis.alpha,
    )?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    out.write_report("ability.json", &prov, &AbilityOut { ability: &result })?;
    Ok(())
}

pub fn difficulty(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let path = require(&cfg.data.scores, "scores")?;
    let prov = Provenance::new("analyze difficulty").input("scores", path);
    let scores = compute_difficulty(&read_scores(path)?)?;
    out.write_report(
        "difficulty.json",
        &prov,
        &DifficultyOut {
            difficulty: &scores,
        },
    )?;
    Ok(())
}
