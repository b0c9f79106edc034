use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_unit_rows, Assignment, ClusterModel};
use crate::data::EmbeddingMatrix;
use crate::error::{validation, Result};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraSimilarity {
    /// Mean pairwise cosine; `None` for an empty cluster.
    pub mean: Option<f64>,
    pub pairs: usize,
    /// Set for one-member clusters, whose similarity is reported as 1.0.
    pub singleton: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQualityReport {
    pub sizes: Vec<usize>,
    pub intra: Vec<IntraSimilarity>,
    /// Mean pairwise centroid cosine; `None` when k = 1.
    pub inter: Option<f64>,
    pub pair_sample_cap: usize,
    pub seed: u64,
}

impl ClusterQualityReport {
    /// Size-weighted mean of the per-cluster intra similarities.
    pub fn mean_intra(&self) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (s, intra) in self.sizes.iter().zip(&self.intra) {
            if let Some(v) = intra.mean {
                num += v * *s as f64;
                den += *s as f64;
            }
        }
        (den > 0.0).then(|| num / den)
    }
}

/// Intra-cluster (sampled pairwise) and inter-cluster (centroid) cosine similarity.
///
/// A cluster with at most `pair_sample_cap` member pairs is evaluated exhaustively;
/// larger clusters use `pair_sample_cap` random pairs drawn from a stream of `seed`
/// private to that cluster.
pub fn cluster_quality<T: Scalar>(
    m: &EmbeddingMatrix<T>,
    assignment: &Assignment,
    model: &ClusterModel<T>,
    pair_sample_cap: usize,
    seed: u64,
) -> Result<ClusterQualityReport> {
    if !assignment.covers(m) {
        return Err(validation("assignment does not cover the embedding rows"));
    }
    if assignment.k() != model.k() || m.d() != model.d() {
        return Err(validation(
            "assignment, model and embeddings disagree on k or d",
        ));
    }
    if pair_sample_cap == 0 {
        return Err(validation("pair_sample_cap must be at least 1"));
    }
    check_unit_rows(m)?;

    let members = assignment.member_rows();
    let mut intra = Vec::with_capacity(model.k());
    for (c, rows) in members.iter().enumerate() {
        let s = rows.len();
        let entry = match s {
            0 => IntraSimilarity {
                mean: None,
                pairs: 0,
                singleton: false,
            },
            1 => IntraSimilarity {
                mean: Some(1.0),
                pairs: 0,
                singleton: true,
            },
            _ => {
                let all_pairs = s * (s - 1) / 2;
                let mut total = 0.0;
                let pairs;
                if all_pairs <= pair_sample_cap {
                    for a in 0..s {
                        for b in a + 1..s {
                            total += pair_sim(m, rows[a], rows[b]);
                        }
                    }
                    pairs = all_pairs;
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(c as u64);
                    for _ in 0..pair_sample_cap {
                        let a = rng.random_range(0..s);
                        let mut b = rng.random_range(0..s - 1);
                        if b >= a {
                            b += 1;
                        }
                        total += pair_sim(m, rows[a], rows[b]);
                    }
                    pairs = pair_sample_cap;
                }
                IntraSimilarity {
                    mean: Some(total / pairs as f64),
                    pairs,
                    singleton: false,
                }
            }
        };
        intra.push(entry);
    }

    let inter = (model.k() > 1).then(|| {
        let mut total = 0.0;
        let mut count = 0usize;
        for a in 0..model.k() {
            for b in a + 1..model.k() {
                total += clamp(dot(model.centroid(a), model.centroid(b)).as_f64());
                count += 1;
            }
        }
        total / count as f64
    });

    Ok(ClusterQualityReport {
        sizes: assignment.sizes(),
        intra,
        inter,
        pair_sample_cap,
        seed,
    })
}

fn clamp(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

fn pair_sim<T: Scalar>(m: &EmbeddingMatrix<T>, a: usize, b: usize) -> f64 {
    clamp(dot(m.row(a), m.row(b)).as_f64())
}

#[cfg(test)]
mod tests {
    use super::super::{assign, fit_spherical_kmeans, KMeansParams};
    use super::*;

    #[test]
    fn identical_points_single_cluster() {
        let rows = vec![vec![0.6f64, 0.8]; 5];
        let m = EmbeddingMatrix::from_rows_sequential(&rows).unwrap();
        let model = fit_spherical_kmeans(&m, &KMeansParams::new(1, 0)).unwrap();
        let a = assign(&m, &model).unwrap();
        let r = cluster_quality(&m, &a, &model, 100, 7).unwrap();
        assert!((r.intra[0].mean.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.inter, None);
        assert_eq!(r.sizes, vec![5]);
    }

    #[test]
    fn orthogonal_groups_have_low_inter_similarity() {
        let (m, _) = super::super::tests::two_groups(3);
        let model = fit_spherical_kmeans(&m, &KMeansParams::new(2, 1)).unwrap();
        let a = assign(&m, &model).unwrap();
        let r = cluster_quality(&m, &a, &model, 200, 1).unwrap();
        assert!(r.inter.unwrap().abs() < 0.05);
        assert!(r.mean_intra().unwrap() > 0.9);
        assert_eq!(r.sizes.iter().sum::<usize>(), m.n());
        // 50 members -> 1225 pairs > cap, so the sampled path ran.
        assert_eq!(r.intra[0].pairs, 200);
    }

    #[test]
    fn same_seed_same_report() {
        let (m, _) = super::super::tests::two_groups(8);
        let model = fit_spherical_kmeans(&m, &KMeansParams::new(3, 1)).unwrap();
        let a = assign(&m, &model).unwrap();
        let r1 = cluster_quality(&m, &a, &model, 50, 99).unwrap();
        let r2 = cluster_quality(&m, &a, &model, 50, 99).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn singleton_flag() {
        let m = EmbeddingMatrix::from_rows_sequential(&[
            vec![1.0f64, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let model = fit_spherical_kmeans(&m, &KMeansParams::new(2, 0)).unwrap();
        let a = assign(&m, &model).unwrap();
        let r = cluster_quality(&m, &a, &model, 10, 0).unwrap();
        let single = r.intra.iter().find(|i| i.singleton).expect("one singleton");
        assert_eq!(single.mean, Some(1.0));
    }
}
