//! Coefficient containers for the `n+m` system and its continuum counterpart.
//!
//! Coefficients are callables evaluated lazily, so one parameter object serves
//! the simulation grid, the kernel mesh and the quadrature grids alike. All
//! indices are zero-based: `lambda(i, x)` is the speed of `u^{i+1}`.

mod example;
mod interp;
mod table;
mod validate;

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

pub use example::{build_example_continuum, build_example_nm, ExampleContinuum, ExampleNm};
pub use interp::{continuum_from_discrete, InterpolatedContinuum};
pub use table::{read_plant_table, write_plant_table, TabulatedPlant};
pub use validate::{validate_continuum, validate_plant, Clause, ValidationReport, Violation};

const FD_STEP: f64 = 1e-6;

/// Coefficients of the `n+m` system
/// `u_t + Λ₊u_x = Σu/n + Wv`, `v_t − Λ₋v_x = Θu/n + Ψv`,
/// `u(t,0) = Qv(t,0)`, `v(t,1) = Ru(t,1)/n + U(t)`.
pub trait PlantCoefficients: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn lambda(&self, i: usize, x: f64) -> f64;
    fn mu(&self, j: usize, x: f64) -> f64;
    fn sigma(&self, i: usize, l: usize, x: f64) -> f64;
    fn w(&self, i: usize, j: usize, x: f64) -> f64;
    fn theta(&self, j: usize, i: usize, x: f64) -> f64;
    fn psi(&self, i: usize, j: usize, x: f64) -> f64;
    fn q(&self, i: usize, j: usize) -> f64;
    fn r(&self, j: usize, i: usize) -> f64;
}

/// Coefficients of the continuum system indexed by the ensemble variable `y`.
pub trait ContinuumCoefficients: Send + Sync + fmt::Debug {
    fn m(&self) -> usize;
    fn lambda(&self, x: f64, y: f64) -> f64;
    fn sigma(&self, x: f64, y: f64, eta: f64) -> f64;
    fn mu(&self, j: usize, x: f64) -> f64;
    fn theta(&self, j: usize, x: f64, y: f64) -> f64;
    fn w(&self, j: usize, x: f64, y: f64) -> f64;
    fn psi(&self, i: usize, j: usize, x: f64) -> f64;
    fn q(&self, j: usize, y: f64) -> f64;
    fn r(&self, j: usize, y: f64) -> f64;

    /// `∂λ/∂x`, by central differences unless overridden.
    fn lambda_x(&self, x: f64, y: f64) -> f64 {
        let (a, b) = fd_span(x);
        (self.lambda(b, y) - self.lambda(a, y)) / (b - a)
    }

    /// `μ_j'`, by central differences unless overridden.
    fn mu_prime(&self, j: usize, x: f64) -> f64 {
        let (a, b) = fd_span(x);
        (self.mu(j, b) - self.mu(j, a)) / (b - a)
    }
}

fn fd_span(x: f64) -> (f64, f64) {
    ((x - FD_STEP).max(0.0), (x + FD_STEP).min(1.0))
}

/// Shared handle to `n+m` plant coefficients.
#[derive(Clone, Debug)]
pub struct PlantParams(Arc<dyn PlantCoefficients>);

impl PlantParams {
    pub fn new(c: impl PlantCoefficients + 'static) -> Self {
        Self(Arc::new(c))
    }
}

impl Deref for PlantParams {
    type Target = dyn PlantCoefficients;
    fn deref(&self) -> &Self::Target {
        &*self.0
    }
}

/// Shared handle to continuum coefficients.
#[derive(Clone, Debug)]
pub struct ContinuumParams(Arc<dyn ContinuumCoefficients>);

impl ContinuumParams {
    pub fn new(c: impl ContinuumCoefficients + 'static) -> Self {
        Self(Arc::new(c))
    }

    /// Coefficient samples on a fixed probe grid, used to key caches.
    pub fn fingerprint(&self) -> Vec<f64> {
        let probes = [0.0, 0.13, 0.37, 0.5, 0.71, 0.94, 1.0];
        let m = self.m();
        let mut out = vec![m as f64];
        for &x in &probes {
            for &y in &probes {
                out.push(self.lambda(x, y));
                for &e in &probes {
                    out.push(self.sigma(x, y, e));
                }
                for j in 0..m {
                    out.push(self.theta(j, x, y));
                    out.push(self.w(j, x, y));
                }
            }
            for j in 0..m {
                out.push(self.mu(j, x));
                out.push(self.q(j, x));
                out.push(self.r(j, x));
                for i in 0..m {
                    out.push(self.psi(i, j, x));
                }
            }
        }
        out
    }
}

impl Deref for ContinuumParams {
    type Target = dyn ContinuumCoefficients;
    fn deref(&self) -> &Self::Target {
        &*self.0
    }
}
