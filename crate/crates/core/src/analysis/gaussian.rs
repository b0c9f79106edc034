use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{validation, Error, Result};
use crate::scalar::Scalar;

/// Default ridge added to every fitted covariance.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// A multivariate normal fitted to one benchmark's embeddings.
///
/// `covariance` already includes the `lambda * I` ridge; `cholesky` is its lower factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel<T> {
    pub name: String,
    d: usize,
    mean: Vec<T>,
    covariance: Vec<T>,
    cholesky: Vec<T>,
    log_det: T,
    lambda: f64,
}

/// Lower Cholesky factor of a symmetric `d x d` row-major matrix, or `None` if it is not
/// numerically positive definite.
pub fn cholesky<T: Scalar>(a: &[T], d: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

impl<T: Scalar> GaussianModel<T> {
    /// Sample mean and `n - 1` covariance of `m`'s rows, plus `lambda * I`.
    pub fn fit(name: impl Into<String>, m: &EmbeddingMatrix<T>, lambda: f64) -> Result<Self> {
        let name = name.into();
        if m.n() < 2 {
            return Err(validation(format!(
                "benchmark '{name}' needs at least 2 samples"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(validation(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        let (n, d) = (m.n(), m.d());
        let nt = T::of_usize(n);
        let mut mean = vec![T::zero(); d];
        for row in m.rows() {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= nt;
        }
        let mut cov = vec![T::zero(); d * d];
        let mut centered = vec![T::zero(); d];
        for row in m.rows() {
            for ((c, &v), &mu) in centered.iter_mut().zip(row).zip(&mean) {
                *c = v - mu;
            }
            for i in 0..d {
                let ci = centered[i];
                for j in 0..=i {
                    cov[i * d + j] += ci * centered[j];
                }
            }
        }
        let denom = T::of_usize(n - 1);
        for i in 0..d {
            for j in 0..=i {
                let v = cov[i * d + j] / denom;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
            cov[i * d + i] += T::of(lambda);
        }
        Self::from_parts(name, mean, cov, lambda)
    }

    /// A model with a given mean and (already regularized) covariance.
    pub fn from_parts(
        name: impl Into<String>,
        mean: Vec<T>,
        covariance: Vec<T>,
        lambda: f64,
    ) -> Result<Self> {
        let name = name.into();
        let d = mean.len();
        if d == 0 || covariance.len() != d * d {
            return Err(validation(format!(
                "model '{name}': mean and covariance shapes disagree"
            )));
        }
        let chol = cholesky(&covariance, d).ok_or_else(|| Error::SingularModel(name.clone()))?;
        let two = T::of(2.0);
        let log_det = (0..d)
            .map(|i| chol[i * d + i].ln())
            .fold(T::zero(), |a, b| a + b)
            * two;
        if !log_det.is_finite() {
            return Err(Error::SingularModel(name));
        }
        Ok(Self {
            name,
            d,
            mean,
            covariance,
            cholesky: chol,
            log_det,
            lambda,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Row-major `d x d`, ridge included.
    pub fn covariance(&self) -> &[T] {
        &self.covariance
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Log density of `x`.
    pub fn log_likelihood(&self, x: &[T]) -> Result<T> {
        if x.len() != self.d {
            return Err(validation(format!(
                "point has {} dims, model '{}' has {}",
                x.len(),
                self.name,
                self.d
            )));
        }
        let d = self.d;
        // Forward substitution L z = x - mu; the Mahalanobis term is |z|^2.
        let mut z = vec![T::zero(); d];
        let mut quad = T::zero();
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= self.cholesky[i * d + k] * z[k];
            }
            z[i] = s / self.cholesky[i * d + i];
            quad += z[i] * z[i];
        }
        let log_2pi = T::of((2.0 * std::f64::consts::PI).ln());
        Ok(-(quad + self.log_det + T::of_usize(d) * log_2pi) / T::of(2.0))
    }
}

/// One model per named benchmark.
pub fn fit_benchmark_gaussians<T: Scalar>(
    benchmarks: &[(String, EmbeddingMatrix<T>)],
    lambda: f64,
) -> Result<Vec<GaussianModel<T>>> {
    if let Some((_, first)) = benchmarks.first() {
        if benchmarks.iter().any(|(_, m)| m.d() != first.d()) {
            return Err(validation("benchmarks have different dimensions"));
        }
    }
    benchmarks
        .iter()
        .map(|(name, m)| GaussianModel::fit(name.clone(), m, lambda))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mat(rows: &[Vec<f64>]) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows_sequential(rows).unwrap()
    }

    #[test]
    fn square_corners() {
        let m = mat(&[
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ]);
        let g = GaussianModel::fit("sq", &m, 0.0).unwrap();
        assert_eq!(g.mean(), &[1.0, 1.0]);
        let c = g.covariance();
        assert!((c[0] - 4.0 / 3.0).abs() < 1e-15 && (c[3] - 4.0 / 3.0).abs() < 1e-15);
        assert!(c[1].abs() < 1e-15 && c[2].abs() < 1e-15);
    }

    #[test]
    fn identical_points_need_regularization() {
        let m = mat(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!(
            matches!(GaussianModel::fit("flat", &m, 0.0), Err(Error::SingularModel(n)) if n == "flat")
        );
        let g = GaussianModel::fit("flat", &m, 0.1).unwrap();
        assert_eq!(g.covariance(), &[0.1, 0.0, 0.0, 0.1]);
    }

    #[test]
    fn standard_normal_values() {
        let g =
            GaussianModel::from_parts("n", vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0], 0.0).unwrap();
        let l = g.log_likelihood(&[0.0, 0.0]).unwrap();
        assert!((l + (2.0 * PI).ln()).abs() < 1e-15);
        assert!((l + 1.837_877_066_409_345).abs() < 1e-12);

        let g1 = GaussianModel::from_parts("n1", vec![3.0], vec![1.0], 0.0).unwrap();
        let l1 = g1.log_likelihood(&[4.0]).unwrap();
        assert!((l1 + 0.5 * (1.0 + (2.0 * PI).ln())).abs() < 1e-15);
        assert!(g1.log_likelihood(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn correlated_covariance_against_closed_form() {
        // [[2, 1], [1, 2]]: det 3, inverse [[2, -1], [-1, 2]] / 3.
        let g =
            GaussianModel::from_parts("c", vec![0.0, 0.0], vec![2.0, 1.0, 1.0, 2.0], 0.0).unwrap();
        assert!((g.log_det() - 3f64.ln()).abs() < 1e-14);
        let x = [1.0, -2.0];
        let quad = (2.0 * 1.0 + 2.0 * 4.0 - 2.0 * (1.0 * -2.0)) / 3.0;
        let want = -0.5 * (quad + 3f64.ln() + 2.0 * (2.0 * PI).ln());
        assert!((g.log_likelihood(&x).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn f32_model_agrees_with_f64() {
        let rows = vec![
            vec![0.1, 0.3],
            vec![0.5, -0.2],
            vec![-0.4, 0.0],
            vec![0.2, 0.2],
        ];
        let g64 = GaussianModel::fit("a", &mat(&rows), 1e-3).unwrap();
        let g32 = GaussianModel::fit("a", &mat(&rows).cast::<f32>(), 1e-3).unwrap();
        let l64 = g64.log_likelihood(&[0.3, 0.1]).unwrap();
        let l32 = g32.log_likelihood(&[0.3f32, 0.1]).unwrap();
        assert!((l64 - l32 as f64).abs() < 1e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mean_is_the_mode(
                pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 4..20),
                dx in prop::collection::vec(-0.5f64..0.5, 3),
            ) {
                let g = GaussianModel::fit("p", &mat(&pts), 1e-3).unwrap();
                let at_mean = g.log_likelihood(g.mean()).unwrap();
                let moved: Vec<f64> = g.mean().iter().zip(&dx).map(|(m, d)| m + d).collect();
                prop_assert!(g.log_likelihood(&moved).unwrap() <= at_mean);
            }
        }
    }
}
