use std::collections::HashSet;

use super::SampleId;
use crate::error::{validation, Error, Result};
use crate::scalar::Scalar;

/// Rows with an L2 norm below this cannot be normalized.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Row-major `n x d` matrix of finite feature vectors, each row tagged with a [`SampleId`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    ids: Vec<SampleId>,
    d: usize,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    /// Builds a matrix from row-major `data`.
    ///
    /// Fails if `d == 0`, the data length is not `ids.len() * d`, an entry is not finite,
    /// or ids repeat. An empty matrix (`n == 0`) is allowed.
    pub fn new(ids: Vec<SampleId>, d: usize, data: Vec<T>) -> Result<Self> {
        if d == 0 {
            return Err(validation("embedding dimension must be at least 1"));
        }
        if data.len() != ids.len() * d {
            return Err(validation(format!(
                "embedding data has {} values, expected {} rows x {} dims",
                data.len(),
                ids.len(),
                d
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(validation(format!(
                "non-finite entry in row of sample {}",
                ids[pos / d]
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { ids, d, data })
    }

    pub fn from_rows(ids: Vec<SampleId>, rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(validation(format!(
                "row {bad} has {} dims, expected {d}",
                rows[bad].len()
            )));
        }
        if rows.len() != ids.len() {
            return Err(validation("row count differs from id count"));
        }
        Self::new(ids, d, rows.concat())
    }

    /// Rows get ids `0..n`.
    pub fn from_rows_sequential(rows: &[Vec<T>]) -> Result<Self> {
        let ids = (0..rows.len() as u64).map(SampleId).collect();
        Self::from_rows(ids, rows)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.d)
    }

    /// Divides every row by its L2 norm.
    ///
    /// Norms are accumulated in f64 so f32 matrices come out unit-norm to within 1e-6.
    pub fn normalize_rows(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for (row, &id) in self.rows().zip(&self.ids) {
            let norm = row
                .iter()
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt();
            if norm < MIN_ROW_NORM {
                return Err(Error::DegenerateRow(id));
            }
            data.extend(row.iter().map(|v| T::of(v.as_f64() / norm)));
        }
        Ok(Self {
            ids: self.ids.clone(),
            d: self.d,
            data,
        })
    }

    /// Largest deviation of any row norm from 1.
    pub fn max_unit_deviation(&self) -> f64 {
        self.rows()
            .map(|row| {
                let n = row
                    .iter()
                    .map(|v| v.as_f64() * v.as_f64())
                    .sum::<f64>()
                    .sqrt();
                (n - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            ids: self.ids.clone(),
            d: self.d,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            d: self.d,
            data,
        }
    }
}

/// Concatenates an image feature block and a text feature block without modification.
pub fn concat_features<T: Scalar>(image_emb: &[T], text_emb: &[T]) -> Result<Vec<T>> {
    if image_emb.is_empty() || text_emb.is_empty() {
        return Err(validation(
            "both feature blocks need at least one dimension",
        ));
    }
    if image_emb.iter().chain(text_emb).any(|v| !v.is_finite()) {
        return Err(validation("non-finite feature value"));
    }
    Ok(image_emb.iter().chain(text_emb).copied().collect())
}

/// Joint vector used for clustering: each modality block is L2-normalized on its own,
/// the blocks are concatenated, and the result is normalized again.
pub fn joint_features<T: Scalar>(image_emb: &[T], text_emb: &[T]) -> Result<Vec<T>> {
    let unit = |block: &[T]| -> Result<Vec<T>> {
        let norm = block
            .iter()
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt();
        if norm < MIN_ROW_NORM {
            return Err(validation("feature block has (near-)zero norm"));
        }
        Ok(block.iter().map(|v| T::of(v.as_f64() / norm)).collect())
    };
    let joined = concat_features(image_emb, text_emb)?;
    let (img, txt) = joined.split_at(image_emb.len());
    let mut joint = unit(img)?;
    joint.extend(unit(txt)?);
    unit(&joint)
}
