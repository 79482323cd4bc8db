use std::fmt;

use serde::Serialize;

use super::{ContinuumParams, PlantParams};

const X_SAMPLES: usize = 101;
const Y_SAMPLES: usize = 41;
const PSI_DIAG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Clause {
    /// `λ > 0`
    PositiveLambda,
    /// `μ_j > 0`
    PositiveMu,
    /// `min μ_j > max μ_{j+1}`
    SpeedOrdering,
    /// `ψ_{j,j} = 0`
    ZeroPsiDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub clause: Clause,
    /// Zero-based component index (second entry used by ordering and `y` probes).
    pub index: usize,
    pub x: f64,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.clause {
            Clause::PositiveLambda => "positive rightward speed",
            Clause::PositiveMu => "positive leftward speed",
            Clause::SpeedOrdering => "strict ordering min mu_j > max mu_(j+1)",
            Clause::ZeroPsiDiagonal => "zero diagonal of Psi",
        };
        write!(
            f,
            "{what} violated for component {} at x = {:.4} (value {:.6e})",
            self.index + 1,
            self.x,
            self.value
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, clause: Clause, index: usize, x: f64, value: f64) {
        // one witness per clause and component is enough
        if !self
            .violations
            .iter()
            .any(|v| v.clause == clause && v.index == index)
        {
            self.violations.push(Violation { clause, index, x, value });
        }
    }
}

fn xs() -> impl Iterator<Item = f64> {
    (0..X_SAMPLES).map(|k| k as f64 / (X_SAMPLES - 1) as f64)
}

fn check_mu(report: &mut ValidationReport, m: usize, mu: impl Fn(usize, f64) -> f64) {
    for j in 0..m {
        for x in xs() {
            let v = mu(j, x);
            if !(v > 0.0) {
                report.push(Clause::PositiveMu, j, x, v);
            }
        }
    }
    for j in 0..m.saturating_sub(1) {
        let (mut lo, mut lo_x) = (f64::INFINITY, 0.0);
        let (mut hi, mut hi_x) = (f64::NEG_INFINITY, 0.0);
        for x in xs() {
            let a = mu(j, x);
            if a < lo {
                (lo, lo_x) = (a, x);
            }
            let b = mu(j + 1, x);
            if b > hi {
                (hi, hi_x) = (b, x);
            }
        }
        if !(lo > hi) {
            let x = if lo_x == hi_x { lo_x } else { hi_x };
            report.push(Clause::SpeedOrdering, j, x, lo - hi);
        }
    }
}

fn check_psi(report: &mut ValidationReport, m: usize, psi: impl Fn(usize, f64) -> f64) {
    for j in 0..m {
        for x in xs() {
            let v = psi(j, x);
            if v.abs() > PSI_DIAG_TOL {
                report.push(Clause::ZeroPsiDiagonal, j, x, v);
            }
        }
    }
}

/// Checks the standing assumptions on a sample grid of `x`.
pub fn validate_plant(p: &PlantParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    for i in 0..p.n() {
        for x in xs() {
            let v = p.lambda(i, x);
            if !(v > 0.0) {
                report.push(Clause::PositiveLambda, i, x, v);
            }
        }
    }
    check_mu(&mut report, p.m(), |j, x| p.mu(j, x));
    check_psi(&mut report, p.m(), |j, x| p.psi(j, j, x));
    report
}

/// Checks the standing assumptions on a sample grid of `(x, y)`.
pub fn validate_continuum(c: &ContinuumParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    'outer: for x in xs() {
        for k in 0..Y_SAMPLES {
            let y = k as f64 / (Y_SAMPLES - 1) as f64;
            let v = c.lambda(x, y);
            if !(v > 0.0) {
                report.push(Clause::PositiveLambda, k, x, v);
                break 'outer;
            }
        }
    }
    check_mu(&mut report, c.m(), |j, x| c.mu(j, x));
    check_psi(&mut report, c.m(), |j, x| c.psi(j, j, x));
    report
}
