use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Prerequisite, SkillCurve, SyntheticLearner, SyntheticPool, TrajectoryLog};
use crate::cluster::Assignment;
use crate::data::SampleId;
use crate::error::{config, Error, Result};
use crate::seeds::{subsystem_rng, Subsystem};

fn default_cluster_size() -> usize {
    200
}

/// Each cluster of the tier depends on `count` distinct clusters drawn from tier `tier`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrerequisiteSpec {
    pub tier: String,
    pub count: usize,
    pub threshold: f64,
}

/// A band of clusters with parameters drawn uniformly from the given ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierSpec {
    pub name: String,
    pub count: usize,
    #[serde(default = "default_cluster_size")]
    pub cluster_size: usize,
    pub a_range: [f64; 2],
    pub s_range: [f64; 2],
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub prerequisites: Vec<PrerequisiteSpec>,
}

/// Synthetic learner population, as read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub tiers: Vec<TierSpec>,
    #[serde(default)]
    pub order_sensitive: bool,
    /// Exposure credited for a sample trained while its cluster is locked.
    #[serde(default)]
    pub locked_efficiency: f64,
}

/// A built population: learner, pool and which tier each cluster belongs to.
#[derive(Debug, Clone)]
pub struct Population {
    pub learner: SyntheticLearner,
    pub pool: SyntheticPool,
    pub tier_of: Vec<usize>,
    pub tier_names: Vec<String>,
}

impl Population {
    /// Mean true accuracy per tier at every checkpoint of `log`; indexed `[tier][checkpoint]`.
    pub fn tier_curves(&self, log: &TrajectoryLog) -> Vec<Vec<f64>> {
        let tiers = self.tier_names.len();
        let mut counts = vec![0usize; tiers];
        for &t in &self.tier_of {
            counts[t] += 1;
        }
        (0..tiers)
            .map(|t| {
                log.true_accuracy
                    .iter()
                    .map(|acc| {
                        let s: f64 = acc
                            .iter()
                            .zip(&self.tier_of)
                            .filter(|(_, &tt)| tt == t)
                            .map(|(a, _)| a)
                            .sum();
                        s / counts[t].max(1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

fn check_range(name: &str, field: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0] <= r[1] && r[0] >= lo && r[1] <= hi && r[0].is_finite() && r[1].is_finite()) {
        return Err(config(format!("tier '{name}': bad {field} {r:?}")));
    }
    Ok(())
}

fn draw<R: Rng + ?Sized>(r: [f64; 2], rng: &mut R) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

impl PopulationSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
    }

    pub fn clusters(&self) -> usize {
        self.tiers.iter().map(|t| t.count).sum()
    }

    pub fn pool_size(&self) -> usize {
        self.tiers.iter().map(|t| t.count * t.cluster_size).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() || self.clusters() == 0 {
            return Err(config("population has no clusters"));
        }
        if !(0.0..=1.0).contains(&self.locked_efficiency) {
            return Err(config("locked_efficiency must lie in [0, 1]"));
        }
        for (i, t) in self.tiers.iter().enumerate() {
            if t.cluster_size == 0 {
                return Err(config(format!(
                    "tier '{}': cluster_size must be at least 1",
                    t.name
                )));
            }
            check_range(&t.name, "a_range", t.a_range, f64::MIN_POSITIVE, 1.0)?;
            check_range(&t.name, "s_range", t.s_range, f64::MIN_POSITIVE, f64::MAX)?;
            if !(0.0..=t.a_range[0]).contains(&t.floor) {
                return Err(config(format!(
                    "tier '{}': floor must lie in [0, min asymptote]",
                    t.name
                )));
            }
            if self.tiers[..i].iter().any(|o| o.name == t.name) {
                return Err(config(format!("duplicate tier name '{}'", t.name)));
            }
            for p in &t.prerequisites {
                let Some(src) = self.tiers[..i].iter().find(|o| o.name == p.tier) else {
                    return Err(config(format!(
                        "tier '{}': prerequisite tier '{}' must be listed earlier",
                        t.name, p.tier
                    )));
                };
                if p.count > src.count {
                    return Err(config(format!(
                        "tier '{}': needs {} prerequisites from '{}' which has {}",
                        t.name, p.count, p.tier, src.count
                    )));
                }
                if !(0.0..=1.0).contains(&p.threshold) {
                    return Err(config(format!(
                        "tier '{}': threshold out of [0, 1]",
                        t.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws curve parameters, prerequisites and the pool. Clusters are numbered tier by tier and
    /// sample ids run contiguously through each cluster.
    pub fn build(&self, seed: u64) -> Result<Population> {
        self.validate()?;
        let mut rng = subsystem_rng(seed, Subsystem::Learner);
        let mut first = Vec::with_capacity(self.tiers.len());
        let mut next = 0usize;
        for t in &self.tiers {
            first.push(next);
            next += t.count;
        }
        let mut skills = Vec::with_capacity(next);
        let mut tier_of = Vec::with_capacity(next);
        for (ti, t) in self.tiers.iter().enumerate() {
            for _ in 0..t.count {
                let mut prerequisites = Vec::new();
                for p in &t.prerequisites {
                    let src = self.tiers.iter().position(|o| o.name == p.tier).unwrap();
                    for j in sample(&mut rng, self.tiers[src].count, p.count) {
                        prerequisites.push(Prerequisite {
                            cluster: first[src] + j,
                            threshold: p.threshold,
                        });
                    }
                }
                skills.push(SkillCurve {
                    asymptote: draw(t.a_range, &mut rng),
                    rate: draw(t.s_range, &mut rng),
                    floor: t.floor,
                    prerequisites,
                });
                tier_of.push(ti);
            }
        }
        let learner = SyntheticLearner::new(skills, self.order_sensitive, self.locked_efficiency)?;

        let mut ids = Vec::with_capacity(self.pool_size());
        let mut labels = Vec::with_capacity(self.pool_size());
        let mut cluster = 0u32;
        for t in &self.tiers {
            for _ in 0..t.count {
                for _ in 0..t.cluster_size {
                    ids.push(SampleId(ids.len() as u64));
                    labels.push(cluster);
                }
                cluster += 1;
            }
        }
        let assignment = Assignment::new(next, ids, labels)?;
        Ok(Population {
            learner,
            pool: SyntheticPool::from_rng(assignment, &mut rng),
            tier_of,
            tier_names: self.tiers.iter().map(|t| t.name.clone()).collect(),
        })
    }

    /// Fifty clusters in easy, moderate and hard tiers. Hard skills unlock only once some
    /// moderate skills are learned, and moderate ones wait on easy ones.
    pub fn three_tier() -> Self {
        Self {
            tiers: vec![
                TierSpec {
                    name: "easy".into(),
                    count: 15,
                    cluster_size: 200,
                    a_range: [0.85, 0.95],
                    s_range: [3.0, 6.0],
                    floor: 0.0,
                    prerequisites: Vec::new(),
                },
                TierSpec {
                    name: "moderate".into(),
                    count: 20,
                    cluster_size: 200,
                    a_range: [0.7, 0.85],
                    s_range: [15.0, 30.0],
                    floor: 0.0,
                    prerequisites: vec![PrerequisiteSpec {
                        tier: "easy".into(),
                        count: 1,
                        threshold: 0.6,
                    }],
                },
                TierSpec {
                    name: "hard".into(),
                    count: 15,
                    cluster_size: 200,
                    a_range: [0.6, 0.8],
                    s_range: [15.0, 30.0],
                    floor: 0.0,
                    prerequisites: vec![PrerequisiteSpec {
                        tier: "moderate".into(),
                        count: 2,
                        threshold: 0.65,
                    }],
                },
            ],
            order_sensitive: true,
            locked_efficiency: 0.0,
        }
    }

    /// `k` interchangeable clusters with no prerequisites.
    pub fn symmetric(k: usize) -> Self {
        Self {
            tiers: vec![TierSpec {
                name: "uniform".into(),
                count: k,
                cluster_size: 500,
                a_range: [0.8, 0.8],
                s_range: [30.0, 30.0],
                floor: 0.0,
                prerequisites: Vec::new(),
            }],
            order_sensitive: false,
            locked_efficiency: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_tier_shape() {
        let spec = PopulationSpec::three_tier();
        assert_eq!(spec.clusters(), 50);
        let p = spec.build(3).unwrap();
        assert_eq!(p.learner.k(), 50);
        assert_eq!(p.pool.len(), 10_000);
        assert_eq!(p.tier_of.iter().filter(|&&t| t == 2).count(), 15);
        for (c, s) in p.learner.skills().iter().enumerate() {
            for q in &s.prerequisites {
                assert!(p.tier_of[q.cluster] + 1 == p.tier_of[c]);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let spec = PopulationSpec::three_tier();
        let (a, b) = (spec.build(8).unwrap(), spec.build(8).unwrap());
        assert_eq!(a.learner, b.learner);
        assert_ne!(a.learner, spec.build(9).unwrap().learner);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let spec = PopulationSpec::three_tier();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<PopulationSpec>(&text).unwrap(), spec);
        let minimal: PopulationSpec = serde_json::from_str(
            r#"{"tiers": [{"name": "t", "count": 3, "a_range": [0.5, 0.9], "s_range": [1, 2]}]}"#,
        )
        .unwrap();
        assert_eq!(minimal.tiers[0].cluster_size, 200);
        assert!(serde_json::from_str::<PopulationSpec>(r#"{"tiers": [], "extra": 1}"#).is_err());
    }

    #[test]
    fn forward_prerequisites_are_rejected() {
        let mut spec = PopulationSpec::three_tier();
        spec.tiers.swap(0, 1);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
