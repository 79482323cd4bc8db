//! The two-channel benchmark system: an `n+2` plant that is open-loop
//! unstable, and the continuum coefficients that interpolate it exactly at
//! `y = i/n`.

use std::f64::consts::PI;

use super::{ContinuumCoefficients, ContinuumParams, PlantCoefficients, PlantParams};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleNm {
    n: usize,
}

impl ExampleNm {
    fn y(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.n as f64
    }
}

pub fn build_example_nm(n: usize) -> Result<PlantParams> {
    if n == 0 {
        return invalid("example plant needs n >= 1");
    }
    Ok(PlantParams::new(ExampleNm { n }))
}

pub fn build_example_continuum() -> ContinuumParams {
    ContinuumParams::new(ExampleContinuum)
}

impl PlantCoefficients for ExampleNm {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        2
    }
    fn lambda(&self, _i: usize, _x: f64) -> f64 {
        1.0
    }
    fn mu(&self, j: usize, _x: f64) -> f64 {
        [2.0, 1.0][j]
    }
    fn sigma(&self, i: usize, l: usize, x: f64) -> f64 {
        let (yi, yl) = (self.y(i), self.y(l));
        x.powi(3) * (x + 1.0) * (yi - 0.5) * yl * (yl - 1.0)
    }
    fn w(&self, i: usize, j: usize, _x: f64) -> f64 {
        [3.0, 2.0][j] * (self.y(i) - 0.5)
    }
    fn theta(&self, j: usize, i: usize, _x: f64) -> f64 {
        let yi = self.y(i);
        -[3.0, 2.0][j] * yi * (yi - 1.0)
    }
    fn psi(&self, _i: usize, _j: usize, _x: f64) -> f64 {
        0.0
    }
    fn q(&self, i: usize, j: usize) -> f64 {
        let yi = self.y(i);
        match j {
            0 => 8.0 * (yi - 0.5),
            _ => -8.0 * (yi - 2.0),
        }
    }
    fn r(&self, j: usize, i: usize) -> f64 {
        let yi = self.y(i);
        match j {
            0 => (2.0 * PI * yi).cos(),
            _ => 2.0 * yi * (yi + 5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleContinuum;

impl ContinuumCoefficients for ExampleContinuum {
    fn m(&self) -> usize {
        2
    }
    fn lambda(&self, _x: f64, _y: f64) -> f64 {
        1.0
    }
    fn lambda_x(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
    fn sigma(&self, x: f64, y: f64, eta: f64) -> f64 {
        x.powi(3) * (x + 1.0) * (y - 0.5) * eta * (eta - 1.0)
    }
    fn mu(&self, j: usize, _x: f64) -> f64 {
        [2.0, 1.0][j]
    }
    fn mu_prime(&self, _j: usize, _x: f64) -> f64 {
        0.0
    }
    fn theta(&self, j: usize, _x: f64, y: f64) -> f64 {
        -[3.0, 2.0][j] * y * (y - 1.0)
    }
    fn w(&self, j: usize, _x: f64, y: f64) -> f64 {
        [3.0, 2.0][j] * (y - 0.5)
    }
    fn psi(&self, _i: usize, _j: usize, _x: f64) -> f64 {
        0.0
    }
    fn q(&self, j: usize, y: f64) -> f64 {
        match j {
            0 => 8.0 * (y - 0.5),
            _ => -8.0 * (y - 2.0),
        }
    }
    fn r(&self, j: usize, y: f64) -> f64 {
        match j {
            0 => (2.0 * PI * y).cos(),
            _ => 2.0 * y * (y + 5.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plant_entries() {
        let p = build_example_nm(4).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(p.w(1, 0, x), 0.0);
        }
        assert_eq!(p.q(3, 1), 8.0);
        for n in [1, 5, 60] {
            let p = build_example_nm(n).unwrap();
            for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                assert_eq!(p.psi(i, j, 0.4), 0.0);
            }
        }
        assert!(build_example_nm(0).is_err());
    }

    #[test]
    fn continuum_entries() {
        let c = build_example_continuum();
        assert!((c.theta(0, 0.2, 0.5) - 0.75).abs() < 1e-15);
        assert_eq!(c.r(1, 1.0), 12.0);
        for x in [0.0, 0.5, 1.0] {
            for y in [0.0, 0.4, 1.0] {
                assert_eq!(c.sigma(x, y, 0.0), 0.0);
                assert_eq!(c.sigma(x, y, 1.0), 0.0);
            }
        }
    }

    #[test]
    fn continuum_interpolates_plant_at_nodes() {
        let c = build_example_continuum();
        for n in [2, 8, 60] {
            let p = build_example_nm(n).unwrap();
            for i in 0..n {
                let yi = (i + 1) as f64 / n as f64;
                for x in [0.0, 0.25, 0.9] {
                    assert_eq!(c.lambda(x, yi), p.lambda(i, x));
                    for j in 0..2 {
                        assert!((c.theta(j, x, yi) - p.theta(j, i, x)).abs() < 1e-14);
                        assert!((c.w(j, x, yi) - p.w(i, j, x)).abs() < 1e-14);
                        assert!((c.q(j, yi) - p.q(i, j)).abs() < 1e-14);
                        assert!((c.r(j, yi) - p.r(j, i)).abs() < 1e-14);
                    }
                    for l in 0..n {
                        let yl = (l + 1) as f64 / n as f64;
                        assert!((c.sigma(x, yi, yl) - p.sigma(i, l, x)).abs() < 1e-14);
                    }
                }
            }
        }
    }
}
