//! Skill clusters: spherical k-means over unit-norm joint embeddings.
//!
//! Similarity everywhere in this module is the plain dot product; callers normalize rows
//! once at load time with [`EmbeddingMatrix::normalize_rows`].

mod assignment;
mod quality;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingMatrix, SampleId};
use crate::error::{config, validation, Result};
use crate::scalar::{dot, Scalar};

pub use assignment::{adjusted_rand_index, assign, read_assignment, write_assignment, Assignment};
pub use quality::{cluster_quality, ClusterQualityReport, IntraSimilarity};

/// Rows whose norm is further than this from 1 are rejected by the clustering routines.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    #[serde(default = "KMeansParams::default_max_iters")]
    pub max_iters: usize,
    /// Stop once one iteration improves the objective by less than this.
    #[serde(default = "KMeansParams::default_tol")]
    pub tol: f64,
}

impl KMeansParams {
    fn default_max_iters() -> usize {
        100
    }

    fn default_tol() -> f64 {
        1e-4
    }

    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: Self::default_max_iters(),
            tol: Self::default_tol(),
        }
    }
}

/// A fitted set of `k` unit-norm centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel<T> {
    k: usize,
    d: usize,
    centroids: Vec<T>,
    pub seed: u64,
    pub iterations_run: usize,
    /// Mean cosine similarity of every point to its assigned centroid.
    pub objective: f64,
    /// Objective after initialization and after every accepted iteration.
    pub objective_trace: Vec<f64>,
}

impl<T: Scalar> ClusterModel<T> {
    /// Wraps externally supplied centroids (e.g. read back from disk). Rows are re-normalized.
    pub fn from_centroids(centroids: &EmbeddingMatrix<T>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(validation("a cluster model needs at least one centroid"));
        }
        let unit = centroids.normalize_rows()?;
        Ok(Self {
            k: unit.n(),
            d: unit.d(),
            centroids: unit.as_slice().to_vec(),
            seed: 0,
            iterations_run: 0,
            objective: f64::NAN,
            objective_trace: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn centroid(&self, c: usize) -> &[T] {
        &self.centroids[c * self.d..(c + 1) * self.d]
    }

    pub fn centroids(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.centroids.chunks_exact(self.d)
    }

    /// Centroids as an embedding matrix whose ids are the cluster indices.
    pub fn to_embeddings(&self) -> EmbeddingMatrix<f32> {
        let ids = (0..self.k as u64).map(SampleId).collect();
        let data = self.centroids.iter().map(|v| v.as_f64() as f32).collect();
        EmbeddingMatrix::new(ids, self.d, data).expect("centroids are finite")
    }

    /// Index of the most similar centroid and that similarity. Ties go to the lower index.
    pub fn nearest(&self, x: &[T]) -> (usize, T) {
        let mut best = (0, dot(x, self.centroid(0)));
        for c in 1..self.k {
            let s = dot(x, self.centroid(c));
            if s > best.1 {
                best = (c, s);
            }
        }
        best
    }
}

pub(crate) fn check_unit_rows<T: Scalar>(m: &EmbeddingMatrix<T>) -> Result<()> {
    let dev = m.max_unit_deviation();
    if dev > UNIT_NORM_TOLERANCE {
        return Err(validation(format!(
            "rows must be unit-norm (max deviation {dev:.3e}); normalize at load"
        )));
    }
    Ok(())
}

/// Spherical k-means with (1 - cosine) k-means++ seeding.
///
/// The objective is non-decreasing across the recorded trace; an iteration that would
/// lower it (possible only through rounding) ends the fit and is discarded.
pub fn fit_spherical_kmeans<T: Scalar>(
    m: &EmbeddingMatrix<T>,
    params: &KMeansParams,
) -> Result<ClusterModel<T>> {
    let n = m.n();
    if params.k == 0 {
        return Err(config("k must be at least 1"));
    }
    if params.k > n {
        return Err(config(format!(
            "k = {} exceeds the number of points n = {n}",
            params.k
        )));
    }
    if params.max_iters == 0 {
        return Err(config("max_iters must be at least 1"));
    }
    if !(params.tol > 0.0) {
        return Err(config("tol must be positive"));
    }
    check_unit_rows(m)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_plus_plus(m, params.k, &mut rng);
    let (mut labels, mut sims) = assign_step(m, &centroids, params.k);
    let mut objective = mean_f64(&sims);
    let mut trace = vec![objective];
    let mut iterations_run = 0;

    for iter in 1..=params.max_iters {
        let next = update_centroids(m, &labels, &sims, params.k);
        let (next_labels, next_sims) = assign_step(m, &next, params.k);
        let next_objective = mean_f64(&next_sims);
        if next_objective < objective {
            break;
        }
        let gain = next_objective - objective;
        centroids = next;
        labels = next_labels;
        sims = next_sims;
        objective = next_objective;
        trace.push(objective);
        iterations_run = iter;
        if gain < params.tol {
            break;
        }
    }

    Ok(ClusterModel {
        k: params.k,
        d: m.d(),
        centroids,
        seed: params.seed,
        iterations_run,
        objective,
        objective_trace: trace,
    })
}

fn mean_f64<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|s| s.as_f64()).sum::<f64>() / v.len() as f64
}

fn clamp_sim<T: Scalar>(s: T) -> T {
    s.max(-T::one()).min(T::one())
}

fn weighted_pick(dist: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = None;
    for (i, &w) in dist.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        pick = Some(i);
        if acc > target {
            break;
        }
    }
    pick.expect("positive total has a positive weight")
}

fn distances_to<T: Scalar>(m: &EmbeddingMatrix<T>, c: &[T]) -> Vec<f64> {
    (0..m.n())
        .into_par_iter()
        .map(|i| (1.0 - clamp_sim(dot(m.row(i), c)).as_f64()).max(0.0))
        .collect()
}

/// Greedy k-means++: each new seed is the best of `2 + ln k` candidates drawn with probability
/// proportional to `1 - cos` to the nearest chosen seed, judged by the remaining potential.
fn kmeans_plus_plus<T: Scalar>(m: &EmbeddingMatrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let n = m.n();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = m.row(first).to_vec();
    let mut dist = distances_to(m, m.row(first));
    dist[first] = 0.0;

    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let candidates: Vec<usize> = (0..trials)
                .map(|_| weighted_pick(&dist, total, rng))
                .collect();
            let mut best: Option<(f64, usize, Vec<f64>)> = None;
            for &cand in &candidates {
                let merged: Vec<f64> = distances_to(m, m.row(cand))
                    .into_iter()
                    .zip(&dist)
                    .map(|(a, &b)| a.min(b))
                    .collect();
                let potential: f64 = merged.iter().sum();
                if best.as_ref().is_none_or(|b| potential < b.0) {
                    best = Some((potential, cand, merged));
                }
            }
            let (_, cand, merged) = best.expect("at least two trials");
            dist = merged;
            cand
        } else {
            // Every remaining point coincides with a chosen centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.extend_from_slice(m.row(pick));
        dist[pick] = 0.0;
    }
    centroids
}

fn assign_step<T: Scalar>(m: &EmbeddingMatrix<T>, centroids: &[T], k: usize) -> (Vec<u32>, Vec<T>) {
    let d = m.d();
    let best: Vec<(u32, T)> = (0..m.n())
        .into_par_iter()
        .map(|i| {
            let x = m.row(i);
            let mut best = (0u32, dot(x, &centroids[..d]));
            for c in 1..k {
                let s = dot(x, &centroids[c * d..(c + 1) * d]);
                if s > best.1 {
                    best = (c as u32, s);
                }
            }
            (best.0, clamp_sim(best.1))
        })
        .collect();
    best.into_iter().unzip()
}

/// Normalized mean of each cluster's rows, summed in row order.
///
/// A cluster left without members (or whose members cancel out) is reseeded to the
/// point least similar to its current centroid.
pub(crate) fn update_centroids<T: Scalar>(
    m: &EmbeddingMatrix<T>,
    labels: &[u32],
    sims: &[T],
    k: usize,
) -> Vec<T> {
    let d = m.d();
    let mut sums = vec![0.0f64; k * d];
    for (x, &c) in m.rows().zip(labels) {
        let acc = &mut sums[c as usize * d..(c as usize + 1) * d];
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v.as_f64();
        }
    }

    let mut out = vec![T::zero(); k * d];
    let mut used = vec![false; m.n()];
    for c in 0..k {
        let sum = &sums[c * d..(c + 1) * d];
        let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dst = &mut out[c * d..(c + 1) * d];
        if norm > crate::data::MIN_ROW_NORM {
            for (o, s) in dst.iter_mut().zip(sum) {
                *o = T::of(s / norm);
            }
            continue;
        }
        let worst = (0..m.n())
            .filter(|&i| !used[i])
            .min_by(|&a, &b| sims[a].partial_cmp(&sims[b]).unwrap().then(a.cmp(&b)));
        if let Some(i) = worst {
            used[i] = true;
            dst.copy_from_slice(m.row(i));
        }
    }
    out
}
