use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{validation, Result};
use crate::scalar::Scalar;

/// Largest output dimension a projection may have.
pub const MAX_PROJECTION_DIMS: usize = 64;

/// Principal-component projection fitted on a set of embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    input_dims: usize,
    mean: Vec<f64>,
    /// `dims x input_dims`, row-major; rows are unit principal directions.
    components: Vec<f64>,
}

impl PcaProjection {
    /// Top `dims` principal directions of all rows of `sources` together.
    pub fn fit<T: Scalar>(sources: &[&EmbeddingMatrix<T>], dims: usize) -> Result<Self> {
        let d = sources
            .first()
            .map(|m| m.d())
            .ok_or_else(|| validation("nothing to fit a projection on"))?;
        if sources.iter().any(|m| m.d() != d) {
            return Err(validation("projection inputs have different dimensions"));
        }
        if dims == 0 || dims > MAX_PROJECTION_DIMS.min(d) {
            return Err(validation(format!(
                "projection dims must lie in 1..={}, got {dims}",
                MAX_PROJECTION_DIMS.min(d)
            )));
        }
        let n: usize = sources.iter().map(|m| m.n()).sum();
        if n < 2 {
            return Err(validation("a projection needs at least 2 rows"));
        }
        let mut mean = vec![0.0; d];
        for m in sources {
            for row in m.rows() {
                for (acc, v) in mean.iter_mut().zip(row) {
                    *acc += v.as_f64();
                }
            }
        }
        for v in &mut mean {
            *v /= n as f64;
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for m in sources {
            for row in m.rows() {
                for ((c, v), mu) in centered.iter_mut().zip(row).zip(&mean) {
                    *c = v.as_f64() - mu;
                }
                for i in 0..d {
                    for j in 0..=i {
                        cov[(i, j)] += centered[i] * centered[j];
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov[(j, i)] = cov[(i, j)];
            }
        }
        cov /= (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut components = Vec::with_capacity(dims * d);
        for &c in order.iter().take(dims) {
            let v = eig.eigenvectors.column(c);
            // Fix the sign so the largest-magnitude entry is positive.
            let pivot = (0..d)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
                .unwrap();
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            components.extend(v.iter().map(|x| x * sign));
        }
        Ok(Self {
            input_dims: d,
            mean,
            components,
        })
    }

    pub fn input_dims(&self) -> usize {
        self.input_dims
    }

    pub fn output_dims(&self) -> usize {
        self.components.len() / self.input_dims
    }

    pub fn project<T: Scalar>(&self, m: &EmbeddingMatrix<T>) -> Result<EmbeddingMatrix<T>> {
        if m.d() != self.input_dims {
            return Err(validation(format!(
                "projection expects {} dims, got {}",
                self.input_dims,
                m.d()
            )));
        }
        let out = self.output_dims();
        let mut data = Vec::with_capacity(m.n() * out);
        for row in m.rows() {
            for c in 0..out {
                let comp = &self.components[c * self.input_dims..(c + 1) * self.input_dims];
                let s: f64 = row
                    .iter()
                    .zip(comp)
                    .zip(&self.mean)
                    .map(|((x, w), mu)| (x.as_f64() - mu) * w)
                    .sum();
                data.push(T::of(s));
            }
        }
        EmbeddingMatrix::new(m.ids().to_vec(), out, data)
    }
}
