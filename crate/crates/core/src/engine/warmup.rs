//! Warmup set selection.
//!
//! Clusters are weighted by `P_i ∝ exp(S_i / (tau * D_i))` where `S_i` (transferability) is the
//! mean cosine between centroid `i` and every other centroid and `D_i` (density) is the mean
//! cosine of the cluster's members to their centroid. Seats are apportioned over clusters with
//! the same largest-remainder rule as selection rounds, and drawn uniformly within each cluster.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::allocate::{apportion, Allocation, UnannotatedPool};
use super::ledger::{BudgetLedger, Phase};
use super::{softmax, SamplingDistribution};
use crate::cluster::{check_unit_rows, Assignment, ClusterModel};
use crate::data::{EmbeddingMatrix, SampleId};
use crate::error::{config, validation, Result};
use crate::scalar::{dot, Scalar};

/// Densities below this are clamped so the warmup logits stay finite.
pub const MIN_DENSITY: f64 = 1e-6;

/// Mean cosine of the members of `cluster` to its centroid; `None` for an empty cluster.
pub fn cluster_density<T: Scalar>(
    m: &EmbeddingMatrix<T>,
    assignment: &Assignment,
    model: &ClusterModel<T>,
    cluster: usize,
) -> Result<Option<f64>> {
    if !assignment.covers(m) || m.d() != model.d() || cluster >= model.k() {
        return Err(validation(
            "density: embeddings, assignment and model disagree",
        ));
    }
    let centroid = model.centroid(cluster);
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, &c) in assignment.labels().iter().enumerate() {
        if c as usize == cluster {
            sum += dot(m.row(i), centroid).as_f64().clamp(-1.0, 1.0);
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

/// Mean cosine between centroid `cluster` and all other centroids; 0 when `k == 1`.
pub fn cluster_transferability<T: Scalar>(model: &ClusterModel<T>, cluster: usize) -> f64 {
    let k = model.k();
    if k < 2 {
        return 0.0;
    }
    let c = model.centroid(cluster);
    let total: f64 = (0..k)
        .filter(|&j| j != cluster)
        .map(|j| dot(c, model.centroid(j)).as_f64().clamp(-1.0, 1.0))
        .sum();
    total / (k - 1) as f64
}

/// Per-cluster transferability and density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupProfile {
    pub transferability: Vec<f64>,
    /// `None` marks an empty cluster, which is excluded from warmup.
    pub density: Vec<Option<f64>>,
}

impl WarmupProfile {
    pub fn from_model<T: Scalar>(
        m: &EmbeddingMatrix<T>,
        assignment: &Assignment,
        model: &ClusterModel<T>,
    ) -> Result<Self> {
        check_unit_rows(m)?;
        let mut density = Vec::with_capacity(model.k());
        for c in 0..model.k() {
            density.push(cluster_density(m, assignment, model, c)?);
        }
        Ok(Self {
            transferability: (0..model.k())
                .map(|c| cluster_transferability(model, c))
                .collect(),
            density,
        })
    }

    /// Equal weights for every non-empty cluster.
    pub fn neutral(sizes: &[usize]) -> Self {
        Self {
            transferability: vec![0.0; sizes.len()],
            density: sizes.iter().map(|&s| (s > 0).then_some(1.0)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.density.len()
    }

    /// Cluster probabilities `∝ exp(S_i / (tau * D_i))`, zero for empty clusters.
    pub fn distribution(&self, tau: f64) -> Result<SamplingDistribution<f64>> {
        if !(tau > 0.0) {
            return Err(config(format!(
                "warmup temperature must be positive, got {tau}"
            )));
        }
        let live: Vec<usize> = (0..self.k())
            .filter(|&c| self.density[c].is_some())
            .collect();
        if live.is_empty() {
            return Err(validation("every cluster is empty"));
        }
        let logits: Vec<f64> = live
            .iter()
            .map(|&c| self.transferability[c] / self.density[c].unwrap().max(MIN_DENSITY))
            .collect();
        let p = softmax(&logits, tau)?;
        let mut probs = vec![0.0; self.k()];
        for (&c, &v) in live.iter().zip(&p.probs) {
            probs[c] = v;
        }
        Ok(SamplingDistribution { probs })
    }
}

/// `floor(ratio * n)`, tolerant of representation error in `ratio`.
pub fn warmup_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Draws the warmup set from `pool` and charges it to `ledger` as warmup spend.
pub fn warmup_select_from_profile<R: Rng + ?Sized>(
    profile: &WarmupProfile,
    pool: &mut UnannotatedPool,
    pool_size: usize,
    ratio: f64,
    warmup_tau: f64,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<Vec<SampleId>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(config(format!(
            "warmup ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if profile.k() != pool.k() {
        return Err(validation(
            "warmup profile and pool disagree on cluster count",
        ));
    }
    let seats = warmup_size(pool_size, ratio);
    if seats > ledger.remaining() {
        return Err(config(format!(
            "warmup needs {seats} annotations but only {} remain in the budget",
            ledger.remaining()
        )));
    }
    if seats > pool.total() {
        return Err(config("warmup set is larger than the unannotated pool"));
    }
    let p = profile.distribution(warmup_tau)?;
    let per_cluster = apportion(&p.probs, seats, &pool.available());
    let ids = pool.draw(
        &Allocation {
            per_cluster,
            explore: 0,
        },
        rng,
    )?;
    ledger.charge(&ids, Phase::Warmup)?;
    Ok(ids)
}

/// Warmup selection straight from a fitted warmup-granularity cluster model.
#[allow(clippy::too_many_arguments)]
pub fn warmup_select<T: Scalar, R: Rng + ?Sized>(
    warmup_model: &ClusterModel<T>,
    assignment: &Assignment,
    m: &EmbeddingMatrix<T>,
    ratio: f64,
    warmup_tau: f64,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<Vec<SampleId>> {
    let profile = WarmupProfile::from_model(m, assignment, warmup_model)?;
    let mut pool = UnannotatedPool::new(assignment, &Default::default());
    warmup_select_from_profile(&profile, &mut pool, m.n(), ratio, warmup_tau, ledger, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::assign;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(rows: &[Vec<f64>]) -> ClusterModel<f64> {
        ClusterModel::from_centroids(&EmbeddingMatrix::from_rows_sequential(rows).unwrap()).unwrap()
    }

    #[test]
    fn density_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mdl = model(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        // Cluster 0: two members at +-45 degrees; cluster 1: one member on its centroid.
        let m = EmbeddingMatrix::from_rows_sequential(&[vec![h, h], vec![h, -h], vec![0.0, 1.0]])
            .unwrap();
        let a = Assignment::new(2, m.ids().to_vec(), vec![0, 0, 1]).unwrap();
        assert!((cluster_density(&m, &a, &mdl, 0).unwrap().unwrap() - h).abs() < 1e-12);
        assert_eq!(cluster_density(&m, &a, &mdl, 1).unwrap(), Some(1.0));

        let empty = Assignment::new(2, m.ids().to_vec(), vec![0, 0, 0]).unwrap();
        assert_eq!(cluster_density(&m, &empty, &mdl, 1).unwrap(), None);
    }

    #[test]
    fn transferability_examples() {
        let orth = model(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(cluster_transferability(&orth, 0), 0.0);
        assert_eq!(cluster_transferability(&orth, 1), 0.0);

        let three = model(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((cluster_transferability(&three, 0) - 0.5).abs() < 1e-15);

        let one = model(&[vec![1.0, 0.0]]);
        assert_eq!(cluster_transferability(&one, 0), 0.0);
    }

    #[test]
    fn single_cluster_takes_everything() {
        let profile = WarmupProfile::neutral(&[50]);
        assert_eq!(profile.distribution(0.1).unwrap().probs, vec![1.0]);
    }

    #[test]
    fn symmetric_clusters_split_evenly() {
        let profile = WarmupProfile {
            transferability: vec![0.3, 0.3],
            density: vec![Some(0.8), Some(0.8)],
        };
        let p = profile.distribution(0.5).unwrap();
        assert_eq!(p.probs[0], p.probs[1]);
        let a = Assignment::new(
            2,
            (0..100).map(SampleId).collect(),
            (0..100).map(|i| i % 2).collect(),
        )
        .unwrap();
        let mut pool = UnannotatedPool::new(&a, &Default::default());
        let mut ledger = BudgetLedger::new(100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ids =
            warmup_select_from_profile(&profile, &mut pool, 100, 0.09, 0.5, &mut ledger, &mut rng)
                .unwrap();
        assert_eq!(ids.len(), 9);
        let even = ids.iter().filter(|id| id.0 % 2 == 0).count();
        assert!(even == 5 || even == 4);
    }

    #[test]
    fn warmup_leaves_remaining_budget() {
        let n = 1000;
        let a = Assignment::new(
            4,
            (0..n).map(SampleId).collect(),
            (0..n as u32).map(|i| i % 4).collect(),
        )
        .unwrap();
        let mut pool = UnannotatedPool::new(&a, &Default::default());
        let mut ledger = BudgetLedger::new(200);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let profile = WarmupProfile::neutral(&a.sizes());
        let ids = warmup_select_from_profile(
            &profile,
            &mut pool,
            n as usize,
            0.09,
            1.0,
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(ids.len(), 90);
        assert_eq!(ledger.warmup_spent(), 90);
        assert_eq!(ledger.remaining(), 110);
    }

    #[test]
    fn warmup_larger_than_budget_is_config_error() {
        let a = Assignment::new(1, (0..100).map(SampleId).collect(), vec![0; 100]).unwrap();
        let mut pool = UnannotatedPool::new(&a, &Default::default());
        let mut ledger = BudgetLedger::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = warmup_select_from_profile(
            &WarmupProfile::neutral(&[100]),
            &mut pool,
            100,
            0.09,
            1.0,
            &mut ledger,
            &mut rng,
        );
        assert!(matches!(e, Err(crate::Error::Config(_))));
        assert_eq!(ledger.spent(), 0);
    }

    #[test]
    fn warmup_from_model_prefers_transferable_clusters() {
        // Clusters 0 and 1 share a direction; cluster 2 is isolated.
        let s = 0.1f64;
        let c = (1.0 - s * s).sqrt();
        let mut rows = Vec::new();
        for i in 0..30 {
            let jitter = if i % 2 == 0 { s } else { -s };
            rows.push(match i % 3 {
                0 => vec![c, jitter, 0.0],
                1 => vec![c, 0.0, jitter],
                _ => vec![jitter, 0.0, c],
            });
        }
        let m = EmbeddingMatrix::from_rows_sequential(&rows)
            .unwrap()
            .normalize_rows()
            .unwrap();
        let mdl = model(&[
            vec![1.0, 0.05, 0.0],
            vec![1.0, 0.0, 0.05],
            vec![0.0, 0.0, 1.0],
        ]);
        let a = assign(&m, &mdl).unwrap();
        let profile = WarmupProfile::from_model(&m, &a, &mdl).unwrap();
        let p = profile.distribution(0.1).unwrap();
        assert!(p.probs[0] > p.probs[2] && p.probs[1] > p.probs[2]);
        let mut ledger = BudgetLedger::new(30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ids = warmup_select(&mdl, &a, &m, 0.5, 0.1, &mut ledger, &mut rng).unwrap();
        assert_eq!(ids.len(), 15);
        assert_eq!(ledger.warmup_spent(), 15);
    }
}
