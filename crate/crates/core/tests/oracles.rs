//! Independent re-derivations of computed values.

mod common;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use progress_core::analysis::GaussianModel;
use progress_core::cluster::{assign, fit_spherical_kmeans, Assignment, KMeansParams};
use progress_core::data::{EmbeddingMatrix, SampleId};
use progress_core::engine::{
    apportion, EngineConfig, ProgressEngine, SamplingDistribution, WarmupProfile,
};

/// Largest remainders in exact arithmetic; equal remainders go to the lower index.
fn hamilton(weights: &[f64], seats: usize) -> Vec<usize> {
    let w: Vec<BigRational> = weights
        .iter()
        .map(|&x| BigRational::from_float(x).unwrap())
        .collect();
    let total = w.iter().fold(BigRational::zero(), |a, b| a + b);
    let quotas: Vec<BigRational> = w
        .iter()
        .map(|x| x * BigRational::from_integer(seats.into()) / &total)
        .collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .map(|q| q.floor().to_integer().to_usize().unwrap())
        .collect();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        (&quotas[b] - quotas[b].floor())
            .cmp(&(&quotas[a] - quotas[a].floor()))
            .then(a.cmp(&b))
    });
    let left = seats - alloc.iter().sum::<usize>();
    for &c in order.iter().take(left) {
        alloc[c] += 1;
    }
    alloc
}

#[test]
fn apportionment_matches_exact_hamilton() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let k = rng.random_range(1..=12);
        let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let seats = rng.random_range(0..=500);
        let got = apportion(&weights, seats, &vec![usize::MAX / 64; k]);
        assert_eq!(
            got,
            hamilton(&weights, seats),
            "weights {weights:?}, seats {seats}"
        );
    }
}

#[test]
fn apportionment_hand_cases() {
    assert_eq!(apportion(&[0.55, 0.45], 10, &[100, 100]), vec![6, 4]);
    assert_eq!(apportion(&[1.0, 0.0], 10, &[4, 100]), vec![4, 6]);
}

#[test]
fn warmup_distribution_matches_double_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..200 {
        let k = rng.random_range(1..=20);
        let profile = WarmupProfile {
            transferability: (0..k).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            density: (0..k)
                .map(|_| Some(0.05 + 0.95 * rng.random::<f64>()))
                .collect(),
        };
        let tau = [0.1, 0.5, 1.0, 3.0][rng.random_range(0..4)];
        let got = profile.distribution(tau).unwrap().probs;
        // exp(S / (tau D)) straight from the definition, normalized in double-double.
        let logits: Vec<common::Dd> = (0..k)
            .map(|c| {
                common::Dd::from(profile.transferability[c])
                    .div(common::Dd::from(tau).mul(common::Dd::from(profile.density[c].unwrap())))
            })
            .collect();
        let w: Vec<common::Dd> = logits.iter().map(|l| l.exp()).collect();
        let total = w.iter().fold(common::Dd::ZERO, |a, &b| a.add(b));
        for (g, x) in got.iter().zip(&w) {
            let want = x.div(total).to_f64();
            assert!(common::rel_err(*g, want) < 1e-12, "{g} vs {want}");
        }
    }
}

#[test]
fn log_likelihood_matches_closed_form_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let normal = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..100 {
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|_| {
                let (u, v) = (normal.sample(&mut rng), normal.sample(&mut rng));
                [1.0 + 2.0 * u, -1.0 + u + 0.5 * v]
            })
            .collect();
        let rows: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
        let g = GaussianModel::fit(
            "b",
            &EmbeddingMatrix::from_rows_sequential(&rows).unwrap(),
            1e-3,
        )
        .unwrap();
        let (mean, cov) = common::fit_2d(&pts, 1e-3);
        for _ in 0..10 {
            let x = [
                4.0 * rng.random::<f64>() - 1.0,
                4.0 * rng.random::<f64>() - 3.0,
            ];
            let want = common::density_2d(x, mean, cov).ln();
            let got = g.log_likelihood(&x).unwrap();
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "{got} vs {want}"
            );
        }
    }
}

#[test]
fn covariance_uses_n_minus_one() {
    let m = EmbeddingMatrix::from_rows_sequential(&[
        vec![0.0, 0.0],
        vec![2.0, 0.0],
        vec![0.0, 2.0],
        vec![2.0, 2.0],
    ])
    .unwrap();
    let g = GaussianModel::fit("sq", &m, 0.0).unwrap();
    let pts = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];
    let (mean, cov) = common::fit_2d(&pts, 0.0);
    assert_eq!(g.mean(), &mean);
    assert!((g.covariance()[0] - cov[0][0]).abs() < 1e-15);
}

#[test]
fn full_exploration_is_uniform_over_availability() {
    // 5 clusters of unequal size; with delta = 1 every seat is drawn pool-wide.
    let sizes = [100usize, 200, 300, 150, 250];
    let labels: Vec<u32> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| vec![c as u32; s])
        .collect();
    let n = labels.len();
    let a = Assignment::new(5, (0..n as u64).map(SampleId).collect(), labels.clone()).unwrap();
    let mut counts = [0f64; 5];
    for seed in 0..50 {
        let cfg = EngineConfig {
            budget_total: 100,
            round_size: 100,
            warmup_ratio: 0.001,
            delta_explore: 1.0,
            seed,
            ..EngineConfig::default()
        };
        let mut e = ProgressEngine::new(cfg, &a).unwrap();
        e.warmup(&WarmupProfile::neutral(&sizes)).unwrap();
        // A sharply peaked distribution that exploration must ignore.
        let peaked = SamplingDistribution {
            probs: vec![1.0, 0.0, 0.0, 0.0, 0.0],
        };
        let r = e.round_with(&[0.0; 5], &peaked, 1.0).unwrap().unwrap();
        for id in r.selected_ids {
            counts[labels[id.0 as usize] as usize] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let chi2: f64 = sizes
        .iter()
        .zip(&counts)
        .map(|(&s, &o)| {
            let e = total * s as f64 / n as f64;
            (o - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

fn mixture(
    seed: u64,
    d: usize,
    k: usize,
    per: usize,
    noise: f64,
) -> (EmbeddingMatrix<f64>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for c in 0..k {
        let dir: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        for _ in 0..per {
            rows.push(
                dir.iter()
                    .map(|x| x / (d as f64).sqrt() + noise * normal.sample(&mut rng))
                    .collect(),
            );
            truth.push(c as u32);
        }
    }
    (
        EmbeddingMatrix::from_rows_sequential(&rows)
            .unwrap()
            .normalize_rows()
            .unwrap(),
        truth,
    )
}

#[test]
fn kmeans_recovers_mixtures_across_seeds() {
    for data_seed in 0..3 {
        let (m, truth) = mixture(data_seed, 128, 8, 60, 0.03);
        for seed in 0..4 {
            let model = fit_spherical_kmeans(&m, &KMeansParams::new(8, seed)).unwrap();
            let labels = assign(&m, &model).unwrap();
            let score = common::ari(labels.labels(), &truth);
            assert!(score >= 0.9, "data {data_seed}, seed {seed}: ARI {score}");
        }
    }
}

#[test]
fn kmeans_objective_is_the_mean_similarity() {
    let (m, _) = mixture(9, 32, 4, 40, 0.05);
    let model = fit_spherical_kmeans(&m, &KMeansParams::new(4, 1)).unwrap();
    let mean = m.rows().map(|x| model.nearest(x).1).sum::<f64>() / m.n() as f64;
    assert!((mean - model.objective).abs() < 1e-12);
}

#[test]
fn hand_values() {
    let pts = EmbeddingMatrix::from_rows_sequential(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let model = fit_spherical_kmeans(&pts, &KMeansParams::new(1, 0)).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((model.centroid(0)[0] - h).abs() < 1e-12 && (model.centroid(0)[1] - h).abs() < 1e-12);
    assert!((model.objective - h).abs() < 1e-12);
}
