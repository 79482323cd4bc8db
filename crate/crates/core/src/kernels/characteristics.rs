//! Travel-time maps `φ(x) = ∫₀ˣ ds/μ(s)` and their inverses.

use crate::error::{invalid, Result};

const TABLE_INTERVALS: usize = 1024;
const INVERSE_TOL: f64 = 1e-13;

// 5-point Gauss–Legendre on [-1, 1]
const GL_X: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Tabulated travel time for one speed profile on `[0, 1]`.
///
/// Values between table nodes use cubic Hermite interpolation with the exact
/// slope `1/μ`, which keeps the map monotone and accurate far below the
/// tolerance of any mesh built on it.
#[derive(Debug, Clone)]
pub struct TravelTime {
    phi: Vec<f64>,
    slope: Vec<f64>,
}

impl TravelTime {
    pub fn new(mu: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / TABLE_INTERVALS as f64;
        let mut slope = Vec::with_capacity(TABLE_INTERVALS + 1);
        for k in 0..=TABLE_INTERVALS {
            let v = mu(k as f64 * h);
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("speed must be positive, got {v} at x = {}", k as f64 * h));
            }
            slope.push(1.0 / v);
        }
        let mut phi = Vec::with_capacity(TABLE_INTERVALS + 1);
        phi.push(0.0);
        for k in 0..TABLE_INTERVALS {
            let c = (k as f64 + 0.5) * h;
            let mut acc = 0.0;
            for (t, w) in GL_X.iter().zip(GL_W) {
                let v = mu(c + 0.5 * h * t);
                if !(v > 0.0) {
                    return invalid(format!("speed must be positive, got {v}"));
                }
                acc += w / v;
            }
            phi.push(phi[k] + 0.5 * h * acc);
        }
        Ok(Self { phi, slope })
    }

    pub fn total(&self) -> f64 {
        self.phi[TABLE_INTERVALS]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let h = 1.0 / TABLE_INTERVALS as f64;
        let x = x.clamp(0.0, 1.0);
        let k = ((x / h).floor() as usize).min(TABLE_INTERVALS - 1);
        let t = x / h - k as f64;
        let (p0, p1) = (self.phi[k], self.phi[k + 1]);
        let (d0, d1) = (self.slope[k] * h, self.slope[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * d1
    }

    /// Solves `φ(x) = s` for `x ∈ [0, 1]`; values of `s` outside the range
    /// of `φ` are clamped to the end points.
    pub fn inverse(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= self.total() {
            return 1.0;
        }
        let k = self.phi.partition_point(|&p| p <= s).clamp(1, TABLE_INTERVALS) - 1;
        let h = 1.0 / TABLE_INTERVALS as f64;
        let (mut lo, mut hi) = (k as f64 * h, (k + 1) as f64 * h);
        while hi - lo > INVERSE_TOL {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `∫₀ˣ ds/μ(s)` for a single point.
pub fn characteristic_phi(mu: impl Fn(f64) -> f64, x: f64) -> Result<f64> {
    Ok(TravelTime::new(mu)?.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_speeds() {
        let two = TravelTime::new(|_| 2.0).unwrap();
        let one = TravelTime::new(|_| 1.0).unwrap();
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            assert!((two.eval(x) - x / 2.0).abs() < 1e-14);
            assert!((one.eval(x) - x).abs() < 1e-14);
            assert!((one.inverse(x) - x).abs() < 1e-10);
            // boundary of the mirrored observer family for speeds 2 and 1
            assert!((one.inverse(two.eval(x)) - x / 2.0).abs() < 1e-10);
        }
        assert!((characteristic_phi(|_| 2.0, 0.6).unwrap() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn variable_speed_roundtrip() {
        let tt = TravelTime::new(|x| 1.0 + 0.5 * (3.0 * x).sin()).unwrap();
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            assert!((tt.inverse(tt.eval(x)) - x).abs() < 1e-10);
        }
        // ∫ ds/(1+s) = ln(1+x)
        let log = TravelTime::new(|x| 1.0 + x).unwrap();
        assert!((log.eval(0.7) - 1.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_speed() {
        assert!(TravelTime::new(|x| x - 0.5).is_err());
        assert!(characteristic_phi(|_| 0.0, 0.5).is_err());
    }
}
