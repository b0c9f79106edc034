use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClusterModel;
use crate::data::{EmbeddingMatrix, SampleId};
use crate::error::{validation, Error, Result};
use crate::scalar::Scalar;

/// Mapping of every sample to one of `k` clusters, kept in input row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    k: usize,
    ids: Vec<SampleId>,
    labels: Vec<u32>,
}

impl Assignment {
    pub fn new(k: usize, ids: Vec<SampleId>, labels: Vec<u32>) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(validation("assignment ids and labels differ in length"));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c as usize >= k) {
            return Err(validation(format!(
                "cluster index {bad} out of range for k = {k}"
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { k, ids, labels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (SampleId, usize)> + '_ {
        self.ids
            .iter()
            .copied()
            .zip(self.labels.iter().map(|&c| c as usize))
    }

    pub fn lookup(&self) -> HashMap<SampleId, usize> {
        self.iter().collect()
    }

    /// Member ids of each cluster, in row order.
    pub fn members(&self) -> Vec<Vec<SampleId>> {
        let mut out = vec![Vec::new(); self.k];
        for (id, c) in self.iter() {
            out[c].push(id);
        }
        out
    }

    /// Row indices of each cluster's members.
    pub fn member_rows(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c as usize].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &c in &self.labels {
            out[c as usize] += 1;
        }
        out
    }

    /// True when this assignment labels exactly the rows of `m`, in order.
    pub fn covers<T: Scalar>(&self, m: &EmbeddingMatrix<T>) -> bool {
        self.ids.as_slice() == m.ids()
    }
}

/// Assigns each row to its most similar centroid (ties go to the lower cluster index).
pub fn assign<T: Scalar>(m: &EmbeddingMatrix<T>, model: &ClusterModel<T>) -> Result<Assignment> {
    if m.d() != model.d() {
        return Err(validation(format!(
            "embedding dimension {} does not match model dimension {}",
            m.d(),
            model.d()
        )));
    }
    let labels = m.rows().map(|x| model.nearest(x).0 as u32).collect();
    Assignment::new(model.k(), m.ids().to_vec(), labels)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentLine {
    id: u64,
    cluster: u32,
}

/// Writes `{"id": .., "cluster": ..}` lines in row order.
pub fn write_assignment(path: impl AsRef<Path>, a: &Assignment) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (&id, &cluster) in a.ids.iter().zip(&a.labels) {
        serde_json::to_writer(&mut w, &AssignmentLine { id: id.0, cluster })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an assignment file. `k` is the largest cluster index + 1 unless given explicitly.
pub fn read_assignment(path: impl AsRef<Path>, k: Option<usize>) -> Result<Assignment> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AssignmentLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        ids.push(SampleId(rec.id));
        labels.push(rec.cluster);
    }
    let k = k.unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m as usize + 1));
    Assignment::new(k, ids, labels)
}

/// Adjusted Rand index between two labelings of the same points.
///
/// Returns 1.0 for identical partitions even in the degenerate case where the expected
/// index equals its maximum (e.g. both labelings put everything in one cluster).
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same points");
    let mut table: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| c2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| c2(v)).sum();
    let total = c2(a.len() as u64);
    let expected = if total > 0.0 {
        sum_rows * sum_cols / total
    } else {
        0.0
    };
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return if index == max_index { 1.0 } else { 0.0 };
    }
    (index - expected) / (max_index - expected)
}
