use serde::{Deserialize, Serialize};

use super::MetricKind;
use crate::error::{config, validation, Result};
use crate::scalar::Scalar;

/// Per-cluster metric values at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot<T> {
    pub step: u64,
    pub values: Vec<T>,
    /// Number of seen samples each value was computed over.
    pub support: Vec<usize>,
}

impl<T: Scalar> MetricSnapshot<T> {
    pub fn new(step: u64, values: Vec<T>, support: Vec<usize>, kind: MetricKind) -> Result<Self> {
        let s = Self {
            step,
            values,
            support,
        };
        s.validate(kind)?;
        Ok(s)
    }

    /// A snapshot of `k` clusters with no evidence at all.
    pub fn empty(step: u64, k: usize) -> Self {
        Self {
            step,
            values: vec![T::zero(); k],
            support: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self, kind: MetricKind) -> Result<()> {
        if self.values.len() != self.support.len() {
            return Err(validation(
                "snapshot values and support counts differ in length",
            ));
        }
        for (c, &v) in self.values.iter().enumerate() {
            let ok = match kind {
                MetricKind::Accuracy => v >= T::zero() && v <= T::one(),
                MetricKind::Loss => v.is_finite() && v >= T::zero(),
            };
            if !ok {
                return Err(validation(format!(
                    "cluster {c}: {kind:?} value {v} out of range"
                )));
            }
        }
        Ok(())
    }
}

/// Learning progress per cluster. Larger means faster improvement in both metric modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaVector<T> {
    pub values: Vec<T>,
    pub metric_kind: MetricKind,
}

impl<T: Scalar> DeltaVector<T> {
    pub fn zeros(k: usize, metric_kind: MetricKind) -> Self {
        Self {
            values: vec![T::zero(); k],
            metric_kind,
        }
    }
}

/// Relative improvement between two checkpoints.
///
/// * accuracy: `(acc_now - acc_prev) / (acc_prev + epsilon)`
/// * loss: `(loss_prev - loss_now) / (loss_prev + epsilon)`
///
/// A cluster with zero support in either snapshot has no evidence and gets 0.
pub fn compute_delta<T: Scalar>(
    curr: &MetricSnapshot<T>,
    prev: &MetricSnapshot<T>,
    epsilon: T,
    metric_kind: MetricKind,
) -> Result<DeltaVector<T>> {
    if curr.k() != prev.k() {
        return Err(validation(format!(
            "snapshots cover {} and {} clusters",
            curr.k(),
            prev.k()
        )));
    }
    if curr.step <= prev.step {
        return Err(validation(format!(
            "current step {} must follow previous step {}",
            curr.step, prev.step
        )));
    }
    if !(epsilon > T::zero()) {
        return Err(config("epsilon must be positive"));
    }
    curr.validate(metric_kind)?;
    prev.validate(metric_kind)?;

    let values = (0..curr.k())
        .map(|c| {
            if curr.support[c] == 0 || prev.support[c] == 0 {
                return T::zero();
            }
            let (now, before) = (curr.values[c], prev.values[c]);
            match metric_kind {
                MetricKind::Accuracy => (now - before) / (before + epsilon),
                MetricKind::Loss => (before - now) / (before + epsilon),
            }
        })
        .collect();
    Ok(DeltaVector {
        values,
        metric_kind,
    })
}

/// Cluster sampling probabilities; they sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SamplingDistribution<T> {
    pub probs: Vec<T>,
}

impl<T: Scalar> SamplingDistribution<T> {
    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![T::one() / T::of_usize(k); k],
        }
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }
}

/// `p_k = exp(score_k / tau) / sum_j exp(score_j / tau)` with the maximum subtracted first,
/// so no finite input overflows.
pub fn softmax<T: Scalar>(scores: &[T], tau: T) -> Result<SamplingDistribution<T>> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(config(format!("temperature must be positive, got {tau}")));
    }
    if scores.is_empty() {
        return Err(validation("softmax over zero clusters"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(validation("softmax scores must be finite"));
    }
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let total: T = weights.iter().copied().sum();
    Ok(SamplingDistribution {
        probs: weights.into_iter().map(|w| w / total).collect(),
    })
}

pub fn softmax_distribution<T: Scalar>(
    deltas: &DeltaVector<T>,
    tau: T,
) -> Result<SamplingDistribution<T>> {
    softmax(&deltas.values, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn snap(step: u64, values: Vec<f64>) -> MetricSnapshot<f64> {
        let k = values.len();
        MetricSnapshot {
            step,
            values,
            support: vec![10; k],
        }
    }

    #[test]
    fn delta_examples() {
        let d = compute_delta(
            &snap(2, vec![0.5]),
            &snap(1, vec![0.5]),
            0.01,
            MetricKind::Accuracy,
        )
        .unwrap();
        assert_eq!(d.values, vec![0.0]);

        let d = compute_delta(
            &snap(2, vec![0.6]),
            &snap(1, vec![0.5]),
            0.01,
            MetricKind::Accuracy,
        )
        .unwrap();
        assert!((d.values[0] - 0.196_078_431_372_549).abs() < 1e-15);

        let d = compute_delta(
            &snap(2, vec![1.0]),
            &snap(1, vec![2.0]),
            0.01,
            MetricKind::Loss,
        )
        .unwrap();
        assert!((d.values[0] - 0.497_512_437_810_945_3).abs() < 1e-15);
    }

    #[test]
    fn delta_errors() {
        let e = compute_delta(
            &snap(2, vec![0.5]),
            &snap(1, vec![0.5, 0.1]),
            0.01,
            MetricKind::Accuracy,
        );
        assert!(matches!(e, Err(crate::Error::Validation(_))));
        let e = compute_delta(
            &snap(1, vec![0.5]),
            &snap(1, vec![0.5]),
            0.01,
            MetricKind::Accuracy,
        );
        assert!(e.is_err());
        let e = compute_delta(
            &snap(2, vec![1.5]),
            &snap(1, vec![0.5]),
            0.01,
            MetricKind::Accuracy,
        );
        assert!(e.is_err());
        let e = compute_delta(
            &snap(2, vec![0.5]),
            &snap(1, vec![0.5]),
            0.0,
            MetricKind::Accuracy,
        );
        assert!(e.is_err());
    }

    #[test]
    fn unsupported_clusters_are_neutral() {
        let prev = MetricSnapshot {
            step: 1,
            values: vec![0.0, 0.2],
            support: vec![0, 4],
        };
        let curr = MetricSnapshot {
            step: 2,
            values: vec![0.9, 0.4],
            support: vec![3, 6],
        };
        let d = compute_delta(&curr, &prev, 0.01, MetricKind::Accuracy).unwrap();
        assert_eq!(d.values[0], 0.0);
        assert!(d.values[1] > 0.0);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.3f64, 0.3, 0.3], 0.7).unwrap();
        for v in &p.probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[0.2f64, 0.1], 1.0).unwrap();
        assert!((p.probs[0] - 0.524_979_187_478_940).abs() < 1e-12);
        assert!((p.probs[1] - 0.475_020_812_521_060).abs() < 1e-12);
        let p = softmax(&[10.0f64, 0.0], 0.01).unwrap();
        assert!(p.probs[0] > 1.0 - 1e-12);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(matches!(
            softmax(&[1.0f64], 0.0),
            Err(crate::Error::Config(_))
        ));
        assert!(softmax(&[1.0f64], -1.0).is_err());
        assert!(softmax(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn softmax_f32_matches_f64() {
        let p32 = softmax(&[0.2f32, 0.1, -0.4], 0.5).unwrap();
        let p64 = softmax(&[0.2f64, 0.1, -0.4], 0.5).unwrap();
        for (a, b) in p32.probs.iter().zip(&p64.probs) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn zero_change_is_zero_delta(
            vals in prop::collection::vec(0.0f64..=1.0, 1..20),
            eps in 1e-4f64..1.0,
        ) {
            for kind in [MetricKind::Accuracy, MetricKind::Loss] {
                let d = compute_delta(&snap(5, vals.clone()), &snap(4, vals.clone()), eps, kind).unwrap();
                prop_assert!(d.values.iter().all(|&v| v == 0.0));
            }
        }
    }
}
