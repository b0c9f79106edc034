use serde::Serialize;

use progress_core::cluster::{
    assign, cluster_quality, fit_spherical_kmeans, write_assignment, ClusterQualityReport,
    KMeansParams,
};
use progress_core::data::{load_manifest, read_embeddings, write_embeddings};
use progress_core::seeds::{subsystem_seed, Subsystem};
use progress_core::Embeddings;

use crate::config::{require, ClusteringConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{OutDir, Provenance};

#[derive(Debug, Serialize)]
struct FitSummary {
    k: usize,
    n: usize,
    d: usize,
    seed: u64,
    iterations: usize,
    objective: f64,
    objective_trace: Vec<f64>,
    centroids: String,
    assignment: String,
    quality: ClusterQualityReport,
}

#[derive(Debug, Serialize)]
struct ClusterReport {
    pcl: FitSummary,
    warmup: Option<FitSummary>,
}

/// Rows as the clustering routines want them.
pub fn unit_rows(m: Embeddings, normalize: bool) -> CliResult<Embeddings> {
    Ok(if normalize { m.normalize_rows()? } else { m })
}

fn fit(
    m: &Embeddings,
    k: usize,
    seed: u64,
    c: &ClusteringConfig,
    out: &OutDir,
    prefix: &str,
) -> CliResult<FitSummary> {
    let params = KMeansParams {
        k,
        seed,
        max_iters: c.max_iters,
        tol: c.tol,
    };
    let model = fit_spherical_kmeans(m, &params)?;
    let a = assign(m, &model)?;
    let centroids = format!("{prefix}centroids.pgrs");
    let assignment = format!("{prefix}assignment.jsonl");
    write_embeddings(&model.to_embeddings(), out.path(&centroids))?;
    write_assignment(out.path(&assignment), &a)?;
    let quality = cluster_quality(
        m,
        &a,
        &model,
        c.pair_sample_cap,
        subsystem_seed(seed, Subsystem::Quality),
    )?;
    log::info!(
        "k = {k}: objective {:.6} after {} iterations",
        model.objective,
        model.iterations_run
    );
    Ok(FitSummary {
        k,
        n: m.n(),
        d: m.d(),
        seed,
        iterations: model.iterations_run,
        objective: model.objective,
        objective_trace: model.objective_trace.clone(),
        centroids,
        assignment,
        quality,
    })
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> CliResult<()> {
    let path = require(&cfg.data.embeddings, "embeddings")?;
    let raw = read_embeddings(path)?;
    let mut prov = Provenance::new("cluster").input("embeddings", path);
    if let Some(mp) = &cfg.data.manifest {
        let records = load_manifest(mp)?;
        let same =
            records.len() == raw.n() && records.iter().zip(raw.ids()).all(|(r, id)| r.id == *id);
        if !same {
            return Err(CliError::Config(format!(
                "manifest {} does not list the embedding ids in row order",
                mp.display()
            )));
        }
        prov = prov.input("manifest", mp);
    }
    let c = &cfg.clustering;
    let m = unit_rows(raw, c.normalize)?;
    let pcl = fit(&m, c.k_pcl, c.seed, c, out, "")?;
    let warmup = match c.k_warmup {
        Some(k) => Some(fit(&m, k, c.seed.wrapping_add(1), c, out, "warmup_")?),
        None => None,
    };
    out.write_report("cluster_report.json", &prov, &ClusterReport { pcl, warmup })?;
    Ok(())
}
