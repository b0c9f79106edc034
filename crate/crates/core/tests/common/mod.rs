#![allow(dead_code)]

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use progress_core::engine::MetricKind;

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`; about 106 bits of precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd {
        hi: s,
        lo: b - (s - a),
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    fn scale(self, p: i32) -> Dd {
        // Two steps so that 2^p itself never overflows or underflows.
        let (a, b) = (p / 2, p - p / 2);
        let (fa, fb) = (2f64.powi(a), 2f64.powi(b));
        Dd {
            hi: self.hi * fa * fb,
            lo: self.lo * fa * fb,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// `e^x`, reduced to `r = x - k ln 2`, then `r / 1024` through a Taylor series and ten
    /// squarings.
    pub fn exp(self) -> Dd {
        if self.hi < -746.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = self.sub(Dd::LN2.mul(Dd::from(k))).scale(-10);
        let mut sum = Dd::ONE;
        let mut term = Dd::ONE;
        for n in 1..40 {
            term = term.mul(r).div(Dd::from(n as f64));
            sum = sum.add(term);
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        sum.scale(k as i32)
    }
}

/// Softmax evaluated in double-double arithmetic.
pub fn softmax_dd(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t = Dd::from(tau);
    let w: Vec<Dd> = scores
        .iter()
        .map(|&s| Dd::from(s).sub(Dd::from(max)).div(t).exp())
        .collect();
    let total = w.iter().fold(Dd::ZERO, |a, &b| a.add(b));
    w.into_iter().map(|x| x.div(total).to_f64()).collect()
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Learning progress in exact rational arithmetic, rounded once at the end.
pub fn delta_exact(now: f64, before: f64, eps: f64, kind: MetricKind) -> f64 {
    let (n, b, e) = (rational(now), rational(before), rational(eps));
    let num = match kind {
        MetricKind::Accuracy => n - b.clone(),
        MetricKind::Loss => b.clone() - n,
    };
    if num.is_zero() {
        return 0.0;
    }
    (num / (b + e)).to_f64().expect("representable")
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs()
    }
}

/// Density of a 2-D normal straight from the closed-form inverse and determinant.
pub fn density_2d(x: [f64; 2], mean: [f64; 2], cov: [[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (dx, dy) = (x[0] - mean[0], x[1] - mean[1]);
    let q = (cov[1][1] * dx * dx - (cov[0][1] + cov[1][0]) * dx * dy + cov[0][0] * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// Sample mean and `n - 1` covariance of 2-D points, with `lambda` on the diagonal.
pub fn fit_2d(points: &[[f64; 2]], lambda: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut c = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - mx, p[1] - my];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    for (i, row) in c.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
        row[i] += lambda;
    }
    ([mx, my], c)
}

/// Adjusted Rand index from the contingency table, written out independently of the library.
pub fn ari(a: &[u32], b: &[u32]) -> f64 {
    use std::collections::HashMap;
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(u32, u32), f64> = HashMap::new();
    let mut ra: HashMap<u32, f64> = HashMap::new();
    let mut rb: HashMap<u32, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(a.len() as f64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
