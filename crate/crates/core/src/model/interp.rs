use super::{validate_plant, ContinuumCoefficients, ContinuumParams, PlantParams};
use crate::error::{invalid, Result};

/// Continuum coefficients built from an `n+m` plant: piecewise linear in `y`
/// through the nodes `y = i/n`, held constant on `[0, 1/n]`.
#[derive(Debug, Clone)]
pub struct InterpolatedContinuum {
    plant: PlantParams,
}

/// Bracketing nodes (zero-based) and weight for `y`.
fn locate(y: f64, n: usize) -> (usize, usize, f64) {
    let mut s = y.clamp(0.0, 1.0) * n as f64;
    let r = s.round();
    if (s - r).abs() < 1e-9 {
        s = r;
    }
    if s <= 1.0 {
        return (0, 0, 0.0);
    }
    let k = s.floor() as usize;
    if k >= n {
        return (n - 1, n - 1, 0.0);
    }
    (k - 1, k, s - k as f64)
}

fn blend(f: impl Fn(usize) -> f64, (a, b, t): (usize, usize, f64)) -> f64 {
    if t == 0.0 {
        f(a)
    } else {
        f(a) * (1.0 - t) + f(b) * t
    }
}

/// Builds continuum coefficients matching `p` at the nodes `y = i/n`.
pub fn continuum_from_discrete(p: &PlantParams) -> Result<ContinuumParams> {
    let report = validate_plant(p);
    if let Some(v) = report.violations.first() {
        return invalid(format!("plant violates its standing assumptions: {v}"));
    }
    Ok(ContinuumParams::new(InterpolatedContinuum { plant: p.clone() }))
}

impl ContinuumCoefficients for InterpolatedContinuum {
    fn m(&self) -> usize {
        self.plant.m()
    }
    fn lambda(&self, x: f64, y: f64) -> f64 {
        blend(|i| self.plant.lambda(i, x), locate(y, self.plant.n()))
    }
    fn sigma(&self, x: f64, y: f64, eta: f64) -> f64 {
        let n = self.plant.n();
        let ly = locate(y, n);
        let le = locate(eta, n);
        blend(|i| blend(|l| self.plant.sigma(i, l, x), le), ly)
    }
    fn mu(&self, j: usize, x: f64) -> f64 {
        self.plant.mu(j, x)
    }
    fn theta(&self, j: usize, x: f64, y: f64) -> f64 {
        blend(|i| self.plant.theta(j, i, x), locate(y, self.plant.n()))
    }
    fn w(&self, j: usize, x: f64, y: f64) -> f64 {
        blend(|i| self.plant.w(i, j, x), locate(y, self.plant.n()))
    }
    fn psi(&self, i: usize, j: usize, x: f64) -> f64 {
        self.plant.psi(i, j, x)
    }
    fn q(&self, j: usize, y: f64) -> f64 {
        blend(|i| self.plant.q(i, j), locate(y, self.plant.n()))
    }
    fn r(&self, j: usize, y: f64) -> f64 {
        blend(|i| self.plant.r(j, i), locate(y, self.plant.n()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_example_continuum, build_example_nm, PlantCoefficients};

    #[test]
    fn exact_at_nodes() {
        let c0 = build_example_continuum();
        for n in [2usize, 8, 60] {
            let p = build_example_nm(n).unwrap();
            let c = continuum_from_discrete(&p).unwrap();
            for i in 0..n {
                let y = (i + 1) as f64 / n as f64;
                for x in [0.0, 0.5, 1.0] {
                    assert_eq!(c.theta(1, x, y), p.theta(1, i, x));
                    assert_eq!(c.w(0, x, y), p.w(i, 0, x));
                    assert_eq!(c.q(1, y), p.q(i, 1));
                    assert_eq!(c.r(0, y), p.r(0, i));
                    assert_eq!(c.lambda(x, y), p.lambda(i, x));
                    assert_eq!(c.sigma(x, y, y), p.sigma(i, i, x));
                    assert!((c.theta(1, x, y) - c0.theta(1, x, y)).abs() < 1e-14);
                }
            }
        }
    }

    #[derive(Debug)]
    struct Flat;
    impl PlantCoefficients for Flat {
        fn n(&self) -> usize {
            1
        }
        fn m(&self) -> usize {
            1
        }
        fn lambda(&self, _: usize, _: f64) -> f64 {
            1.5
        }
        fn mu(&self, _: usize, _: f64) -> f64 {
            0.5
        }
        fn sigma(&self, _: usize, _: usize, _: f64) -> f64 {
            0.2
        }
        fn w(&self, _: usize, _: usize, _: f64) -> f64 {
            -1.0
        }
        fn theta(&self, _: usize, _: usize, _: f64) -> f64 {
            0.7
        }
        fn psi(&self, _: usize, _: usize, _: f64) -> f64 {
            0.0
        }
        fn q(&self, _: usize, _: usize) -> f64 {
            3.0
        }
        fn r(&self, _: usize, _: usize) -> f64 {
            -2.0
        }
    }

    #[test]
    fn single_node_gives_constant_functions() {
        let c = continuum_from_discrete(&PlantParams::new(Flat)).unwrap();
        for y in [0.0, 0.3, 0.99, 1.0] {
            assert_eq!(c.lambda(0.4, y), 1.5);
            assert_eq!(c.sigma(0.4, y, 1.0 - y), 0.2);
            assert_eq!(c.q(0, y), 3.0);
        }
    }

    #[test]
    fn midpoints_lie_between_monotone_nodes() {
        let n = 9;
        let p = build_example_nm(n).unwrap();
        let c = continuum_from_discrete(&p).unwrap();
        // W_{i,1} = 3(i/n - 1/2) is increasing in i
        for i in 1..n {
            let y = (i as f64 + 0.5) / n as f64;
            let v = c.w(0, 0.0, y);
            assert!(v > p.w(i - 1, 0, 0.0) && v < p.w(i, 0, 0.0));
        }
    }
}
