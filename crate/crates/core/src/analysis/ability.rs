use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{check_unit_rows, Assignment};
use crate::data::{EmbeddingMatrix, SampleId};
use crate::error::{validation, Error, Result};
use crate::scalar::{dot, Scalar};

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAbility {
    pub cluster: usize,
    /// Most frequent kept neighbor label; `None` when nothing was kept.
    pub label: Option<String>,
    pub votes: BTreeMap<String, usize>,
    pub abstain: bool,
    /// True when several labels shared the top vote count.
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityAssignment {
    pub clusters: Vec<ClusterAbility>,
    pub top_k: usize,
    pub alpha: f64,
    pub warnings: Vec<String>,
}

impl AbilityAssignment {
    pub fn label(&self, cluster: usize) -> Option<&str> {
        self.clusters[cluster].label.as_deref()
    }

    pub fn tie_events(&self) -> usize {
        self.clusters.iter().filter(|c| c.tied).count()
    }
}

/// Indices of the benchmark rows kept for `x`: the `top_k` most similar (ties by ascending id),
/// then only those with similarity at least `alpha` times the best.
pub fn kept_neighbors<T: Scalar>(
    x: &[T],
    bench: &EmbeddingMatrix<T>,
    top_k: usize,
    alpha: f64,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..bench.n())
        .map(|j| (dot(x, bench.row(j)).as_f64(), j))
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| bench.ids()[a.1].cmp(&bench.ids()[b.1]))
    });
    scored.truncate(top_k);
    let Some(&(best, _)) = scored.first() else {
        return Vec::new();
    };
    let threshold = alpha * best;
    scored
        .into_iter()
        .filter(|&(s, _)| s >= threshold)
        .map(|(_, j)| j)
        .collect()
}

/// Most frequent label, ties to the lexicographically smallest; also reports whether a tie
/// occurred.
pub fn mode_label(votes: &BTreeMap<String, usize>) -> Option<(String, bool)> {
    let top = *votes.values().max()?;
    let mut winners = votes.iter().filter(|(_, &v)| v == top).map(|(k, _)| k);
    let first = winners.next()?.clone();
    Some((first, winners.next().is_some()))
}

/// Labels every cluster with the ability its members' benchmark neighbors vote for.
pub fn assign_ability<T: Scalar>(
    samples: &EmbeddingMatrix<T>,
    assignment: &Assignment,
    bench: &EmbeddingMatrix<T>,
    labels: &[String],
    top_k: usize,
    alpha: f64,
) -> Result<AbilityAssignment> {
    if top_k == 0 {
        return Err(validation("top_k must be at least 1"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(validation(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if labels.len() != bench.n() {
        return Err(validation(
            "one ability label per benchmark sample is required",
        ));
    }
    if !assignment.covers(samples) {
        return Err(validation(
            "assignment does not match the sample embeddings",
        ));
    }
    if samples.d() != bench.d() {
        return Err(validation(
            "samples and benchmark have different dimensions",
        ));
    }
    check_unit_rows(samples)?;
    check_unit_rows(bench)?;

    let kept: Vec<Vec<usize>> = (0..samples.n())
        .into_par_iter()
        .map(|i| kept_neighbors(samples.row(i), bench, top_k, alpha))
        .collect();

    let k = assignment.k();
    let mut votes: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); k];
    let sizes = assignment.sizes();
    for (i, &c) in assignment.labels().iter().enumerate() {
        for &j in &kept[i] {
            *votes[c as usize].entry(labels[j].clone()).or_default() += 1;
        }
    }
    let mut warnings = Vec::new();
    let clusters = votes
        .into_iter()
        .enumerate()
        .map(|(c, votes)| {
            if sizes[c] == 0 {
                let msg = format!("cluster {c} is empty; skipped");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            let (label, tied) = match mode_label(&votes) {
                Some((l, t)) => (Some(l), t),
                None => (None, false),
            };
            ClusterAbility {
                cluster: c,
                abstain: label.is_none(),
                label,
                votes,
                tied,
            }
        })
        .collect();
    Ok(AbilityAssignment {
        clusters,
        top_k,
        alpha,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbilityLabel {
    pub id: SampleId,
    pub ability: String,
}

/// Reads `{"id", "ability"}` lines.
pub fn read_ability_labels(path: impl AsRef<Path>) -> Result<Vec<AbilityLabel>> {
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

/// Labels in the row order of `bench`.
pub fn align_labels<T: Scalar>(
    bench: &EmbeddingMatrix<T>,
    labels: &[AbilityLabel],
) -> Result<Vec<String>> {
    let mut by_id = std::collections::HashMap::with_capacity(labels.len());
    for l in labels {
        if by_id.insert(l.id, l.ability.clone()).is_some() {
            return Err(Error::DuplicateId(l.id));
        }
    }
    bench
        .ids()
        .iter()
        .map(|id| {
            by_id
                .remove(id)
                .ok_or_else(|| validation(format!("no ability label for benchmark sample {id}")))
        })
        .collect()
}
