use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prerequisite {
    pub cluster: usize,
    /// Accuracy the prerequisite cluster must reach before this one unlocks.
    pub threshold: f64,
}

/// Learning curve of one skill cluster: `asymptote * (1 - exp(-exposure / rate))`, held at
/// `floor` (or below) while a prerequisite is unmet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCurve {
    pub asymptote: f64,
    pub rate: f64,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub prerequisites: Vec<Prerequisite>,
}

impl SkillCurve {
    pub fn simple(asymptote: f64, rate: f64) -> Self {
        Self {
            asymptote,
            rate,
            floor: 0.0,
            prerequisites: Vec::new(),
        }
    }
}

/// A stand-in for the model being trained.
///
/// When `order_sensitive` is set, a sample trained while its cluster is still locked by a
/// prerequisite only adds `locked_efficiency` exposure instead of a full unit, so the order
/// in which samples arrive changes where the learner ends up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLearner {
    skills: Vec<SkillCurve>,
    exposure: Vec<f64>,
    order_sensitive: bool,
    locked_efficiency: f64,
}

impl SyntheticLearner {
    pub fn new(
        skills: Vec<SkillCurve>,
        order_sensitive: bool,
        locked_efficiency: f64,
    ) -> Result<Self> {
        let k = skills.len();
        for (c, s) in skills.iter().enumerate() {
            if !(s.asymptote > 0.0 && s.asymptote <= 1.0) {
                return Err(validation(format!(
                    "cluster {c}: asymptote must lie in (0, 1]"
                )));
            }
            if !(s.rate > 0.0 && s.rate.is_finite()) {
                return Err(validation(format!("cluster {c}: rate must be positive")));
            }
            if !(0.0..=s.asymptote).contains(&s.floor) {
                return Err(validation(format!(
                    "cluster {c}: floor must lie in [0, asymptote]"
                )));
            }
            for p in &s.prerequisites {
                if p.cluster >= k || p.cluster == c {
                    return Err(validation(format!(
                        "cluster {c}: bad prerequisite {}",
                        p.cluster
                    )));
                }
                if !(0.0..=1.0).contains(&p.threshold) {
                    return Err(validation(format!("cluster {c}: threshold out of [0, 1]")));
                }
            }
        }
        if !(0.0..=1.0).contains(&locked_efficiency) {
            return Err(validation("locked_efficiency must lie in [0, 1]"));
        }
        let learner = Self {
            exposure: vec![0.0; k],
            skills,
            order_sensitive,
            locked_efficiency,
        };
        learner.check_acyclic()?;
        Ok(learner)
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on stack, 2 = done
        fn visit(l: &SyntheticLearner, c: usize, state: &mut [u8]) -> bool {
            match state[c] {
                1 => return false,
                2 => return true,
                _ => {}
            }
            state[c] = 1;
            for p in &l.skills[c].prerequisites {
                if !visit(l, p.cluster, state) {
                    return false;
                }
            }
            state[c] = 2;
            true
        }
        let mut state = vec![0u8; self.k()];
        for c in 0..self.k() {
            if !visit(self, c, &mut state) {
                return Err(validation("prerequisites form a cycle"));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.skills.len()
    }

    pub fn skills(&self) -> &[SkillCurve] {
        &self.skills
    }

    pub fn is_order_sensitive(&self) -> bool {
        self.order_sensitive
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    /// Same curves, no exposure.
    pub fn reset(&self) -> Self {
        Self {
            exposure: vec![0.0; self.k()],
            ..self.clone()
        }
    }

    fn curve(&self, c: usize) -> f64 {
        let s = &self.skills[c];
        s.asymptote * (1.0 - (-self.exposure[c] / s.rate).exp())
    }

    pub fn unlocked(&self, c: usize) -> bool {
        self.skills[c]
            .prerequisites
            .iter()
            .all(|p| self.accuracy(p.cluster) >= p.threshold)
    }

    /// True accuracy of cluster `c` in `[0, asymptote]`.
    pub fn accuracy(&self, c: usize) -> f64 {
        let v = self.curve(c);
        if self.unlocked(c) {
            v
        } else {
            v.min(self.skills[c].floor)
        }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        (0..self.k()).map(|c| self.accuracy(c)).collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.accuracies().iter().sum::<f64>() / self.k() as f64
    }

    /// One training sample from cluster `c`.
    pub fn train(&mut self, c: usize) {
        let gain = if self.order_sensitive && !self.unlocked(c) {
            self.locked_efficiency
        } else {
            1.0
        };
        self.exposure[c] += gain;
    }

    pub fn train_all(&mut self, clusters: impl IntoIterator<Item = usize>) {
        for c in clusters {
            self.train(c);
        }
    }
}
