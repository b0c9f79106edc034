use std::fmt;

use rayon::prelude::*;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::gaussian::GaussianModel;
use crate::data::EmbeddingMatrix;
use crate::error::{validation, Result};
use crate::scalar::Scalar;

/// `log(1 / f)`. A benchmark nothing was assigned to has infinite rarity, written as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Rarity(pub f64);

impl Rarity {
    pub fn from_frequency(f: f64) -> Self {
        if f > 0.0 {
            Rarity(-f.ln())
        } else {
            Rarity(f64::INFINITY)
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Rarity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Rarity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Rarity;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Rarity, E> {
                Ok(Rarity(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Rarity, E> {
                Ok(Rarity(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Rarity, E> {
                Ok(Rarity(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Rarity, E> {
                match v {
                    "inf" => Ok(Rarity(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// How frequencies are turned into rarities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RarityMode {
    /// `f = n / N`; zero counts give infinite rarity.
    #[default]
    Exact,
    /// `f = (n + 1) / (N + M)`; always finite.
    AddOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityReport {
    pub benchmarks: Vec<String>,
    pub counts: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub rarities: Vec<Rarity>,
    pub total: usize,
    pub mode: RarityMode,
    /// Covariance ridge of the fitted models.
    pub lambda: f64,
    /// Output dimension of the projection applied before fitting, if any.
    pub projection_dims: Option<usize>,
    /// Rows whose best likelihood was shared by more than one benchmark.
    pub tie_events: usize,
}

/// Index of the most likely model for every row (ties go to the lower index), and the number
/// of rows that had a tie.
pub fn rarity_assignments<T: Scalar>(
    train: &EmbeddingMatrix<T>,
    models: &[GaussianModel<T>],
) -> Result<(Vec<u32>, usize)> {
    if models.is_empty() {
        return Err(validation("at least one benchmark model is required"));
    }
    if let Some(m) = models.iter().find(|m| m.d() != train.d()) {
        return Err(validation(format!(
            "model '{}' has {} dims, training embeddings have {}",
            m.name,
            m.d(),
            train.d()
        )));
    }
    let best: Vec<(u32, bool)> = (0..train.n())
        .into_par_iter()
        .map(|i| {
            let x = train.row(i);
            let mut arg = 0u32;
            let mut top = models[0].log_likelihood(x)?;
            let mut tied = false;
            for (j, m) in models.iter().enumerate().skip(1) {
                let l = m.log_likelihood(x)?;
                if l > top {
                    top = l;
                    arg = j as u32;
                    tied = false;
                } else if l == top {
                    tied = true;
                }
            }
            Ok((arg, tied))
        })
        .collect::<Result<_>>()?;
    let ties = best.iter().filter(|b| b.1).count();
    Ok((best.into_iter().map(|b| b.0).collect(), ties))
}

/// Counts, frequencies and rarities from per-row benchmark indices.
pub fn rarity_from_assignments(labels: &[u32], names: &[String], mode: RarityMode) -> RarityReport {
    let m = names.len();
    let mut counts = vec![0usize; m];
    for &l in labels {
        counts[l as usize] += 1;
    }
    let n = labels.len();
    let frequencies: Vec<f64> = counts
        .iter()
        .map(|&c| match mode {
            RarityMode::Exact if n == 0 => 0.0,
            RarityMode::Exact => c as f64 / n as f64,
            RarityMode::AddOne => (c + 1) as f64 / (n + m) as f64,
        })
        .collect();
    RarityReport {
        benchmarks: names.to_vec(),
        counts,
        rarities: frequencies
            .iter()
            .map(|&f| Rarity::from_frequency(f))
            .collect(),
        frequencies,
        total: n,
        mode,
        lambda: 0.0,
        projection_dims: None,
        tie_events: 0,
    }
}

/// Assigns each training row to its most likely benchmark and reports how rare each benchmark
/// is within the training pool.
pub fn assign_rarity<T: Scalar>(
    train: &EmbeddingMatrix<T>,
    models: &[GaussianModel<T>],
    mode: RarityMode,
) -> Result<RarityReport> {
    let (labels, ties) = rarity_assignments(train, models)?;
    let names: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
    let mut report = rarity_from_assignments(&labels, &names, mode);
    report.lambda = models[0].lambda();
    report.tie_events = ties;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn sentinel_serializes_as_inf() {
        let v = serde_json::to_string(&vec![Rarity(0.5), Rarity(f64::INFINITY)]).unwrap();
        assert_eq!(v, r#"[0.5,"inf"]"#);
        let back: Vec<Rarity> = serde_json::from_str(&v).unwrap();
        assert!(back[1].is_infinite());
        assert!(serde_json::from_str::<Rarity>(r#""nan""#).is_err());
    }

    #[test]
    fn single_benchmark_is_not_rare() {
        let r = rarity_from_assignments(&[0, 0, 0], &["a".into()], RarityMode::Exact);
        assert_eq!(r.frequencies, vec![1.0]);
        assert_eq!(r.rarities[0].0, 0.0);
    }

    #[test]
    fn half_split_gives_ln2() {
        let r =
            rarity_from_assignments(&[0, 1, 0, 1], &["a".into(), "b".into()], RarityMode::Exact);
        assert!(r.rarities.iter().all(|x| (x.0 - LN_2).abs() < 1e-15));
    }

    #[test]
    fn zero_count_modes() {
        let names = ["a".to_string(), "b".to_string()];
        let exact = rarity_from_assignments(&[0, 0], &names, RarityMode::Exact);
        assert!(exact.rarities[1].is_infinite());
        let smooth = rarity_from_assignments(&[0, 0], &names, RarityMode::AddOne);
        assert_eq!(smooth.frequencies, vec![0.75, 0.25]);
        assert!((smooth.rarities[1].0 - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let a = GaussianModel::from_parts("a", vec![0.0], vec![1.0], 0.0).unwrap();
        let b = GaussianModel::from_parts("b", vec![2.0], vec![1.0], 0.0).unwrap();
        let train = EmbeddingMatrix::from_rows_sequential(&[vec![1.0], vec![1.9]]).unwrap();
        let (labels, ties) = rarity_assignments(&train, &[a, b]).unwrap();
        assert_eq!(labels, vec![0, 1]);
        assert_eq!(ties, 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_sum_and_rarity_order(labels in prop::collection::vec(0u32..4, 1..200)) {
                let names: Vec<String> = (0..4).map(|i| format!("b{i}")).collect();
                let r = rarity_from_assignments(&labels, &names, RarityMode::Exact);
                prop_assert_eq!(r.counts.iter().sum::<usize>(), labels.len());
                for i in 0..4 {
                    prop_assert!((0.0..=1.0).contains(&r.frequencies[i]));
                    prop_assert!(r.rarities[i].0 >= 0.0);
                    for j in 0..4 {
                        if r.frequencies[i] < r.frequencies[j] {
                            prop_assert!(r.rarities[i].0 > r.rarities[j].0);
                        }
                    }
                }
            }
        }
    }
}
