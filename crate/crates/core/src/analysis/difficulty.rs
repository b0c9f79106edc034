use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// One benchmark's full-finetune score and its scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkScore {
    pub name: String,
    pub raw: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub name: String,
    pub raw: f64,
    pub max: f64,
    /// `(max - raw) / max`
    pub difficulty: f64,
}

pub fn difficulty(raw: f64, max: f64) -> Result<f64> {
    if !(max > 0.0 && max.is_finite()) {
        return Err(validation(format!("max score must be positive, got {max}")));
    }
    if !(0.0..=max).contains(&raw) {
        return Err(validation(format!("raw score {raw} outside [0, {max}]")));
    }
    Ok((max - raw) / max)
}

pub fn compute_difficulty(scores: &[BenchmarkScore]) -> Result<Vec<DifficultyScore>> {
    scores
        .iter()
        .map(|s| {
            let d = difficulty(s.raw, s.max).map_err(|e| validation(format!("{}: {e}", s.name)))?;
            Ok(DifficultyScore {
                name: s.name.clone(),
                raw: s.raw,
                max: s.max,
                difficulty: d,
            })
        })
        .collect()
}

/// Reads a JSON array of `{name, raw, max}`.
pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<BenchmarkScore>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}
