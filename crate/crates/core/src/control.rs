//! Boundary control laws built from the control kernels, and the sampler that
//! turns a continuum observer state into an `n+m` estimate.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::kernels::{GainSampling, GainSet, KernelField, KernelKind};
use crate::model::{ContinuumParams, PlantParams};
use crate::numerics::XGrid;
use crate::sim::{lift_state, DiscreteSystem, GridState};

/// `U = (1/n) ∫ K̃(1,ξ) u dξ + ∫ L(1,ξ) v dξ − (1/n) R u(1)` for a state on
/// `n` cells. The same formula realizes the continuum law when the state is
/// a continuum observer on `n̂` rows, the `y` integrals becoming `1/n̂` sums.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputLaw {
    cells: usize,
    m: usize,
    grid: XGrid,
    /// `[b][i * cells + c]`
    k: Vec<Vec<f64>>,
    /// `[b][i * m + j]`
    l: Vec<Vec<f64>>,
    /// `[j * cells + c]`
    r: Vec<f64>,
}

impl OutputLaw {
    pub fn from_tables(
        cells: usize,
        m: usize,
        grid: XGrid,
        k: Vec<Vec<f64>>,
        l: Vec<Vec<f64>>,
        r: Vec<f64>,
    ) -> Result<Self> {
        let nx = grid.len();
        if cells == 0 || m == 0 {
            return invalid("a control law needs at least one cell and one input");
        }
        let ok = k.len() == nx
            && l.len() == nx
            && k.iter().all(|row| row.len() == m * cells)
            && l.iter().all(|row| row.len() == m * m)
            && r.len() == m * cells;
        if !ok {
            return invalid(format!("gain tables do not match {cells} cells, m = {m}, Nx = {nx}"));
        }
        Ok(Self { cells, m, grid, k, l, r })
    }

    /// Law for the `n+m` plant with continuum gains sampled on its cells.
    pub fn nm(gains: &GainSet, p: &PlantParams) -> Result<Self> {
        if gains.n != p.n() || gains.m != p.m() {
            return invalid(format!(
                "gains are for {}+{}, plant is {}+{}",
                gains.n,
                gains.m,
                p.n(),
                p.m()
            ));
        }
        let (n, m) = (gains.n, gains.m);
        let mut r = vec![0.0; m * n];
        for j in 0..m {
            for i in 0..n {
                r[j * n + i] = p.r(j, i);
            }
        }
        Self::from_tables(n, m, gains.grid, gains.k.clone(), gains.l.clone(), r)
    }

    /// Continuum law acting on an `n̂`-row observer. `K(1,ξ,·)` enters
    /// through its cell means (or node values), `R` through its values at `y = i/n̂`, matching
    /// [`DiscreteSystem::from_continuum`].
    pub fn continuum(field: &KernelField, c: &ContinuumParams, n_hat: usize, grid: &XGrid) -> Result<Self> {
        Self::continuum_with(field, c, n_hat, grid, GainSampling::CellMean)
    }

    pub fn continuum_with(
        field: &KernelField,
        c: &ContinuumParams,
        n_hat: usize,
        grid: &XGrid,
        sampling: GainSampling,
    ) -> Result<Self> {
        if field.kind() != KernelKind::Control {
            return invalid("the control law needs control kernels");
        }
        let m = c.m();
        if field.m() != m {
            return invalid(format!("kernels have m = {}, parameters m = {m}", field.m()));
        }
        if n_hat == 0 {
            return invalid("the ensemble discretization needs at least one row");
        }
        let mut k = Vec::with_capacity(grid.len());
        let mut l = Vec::with_capacity(grid.len());
        for xi in grid.nodes() {
            let mut row = vec![0.0; m * n_hat];
            for i in 0..m {
                let means = sampling.sample(field.ygrid(), &field.eval_ydep(i, 1.0, xi), n_hat)?;
                row[i * n_hat..(i + 1) * n_hat].copy_from_slice(&means);
            }
            k.push(row);
            l.push(
                (0..m * m)
                    .map(|ij| field.eval_mat(ij / m, ij % m, 1.0, xi))
                    .collect(),
            );
        }
        let r = (0..m * n_hat)
            .map(|jc| c.r(jc / n_hat, (jc % n_hat + 1) as f64 / n_hat as f64))
            .collect();
        Self::from_tables(n_hat, m, *grid, k, l, r)
    }

    /// Replaces `R` by the samples a [`DiscreteSystem`] uses, so the
    /// boundary term cancels exactly in that system.
    pub fn with_r_of(mut self, sys: &DiscreteSystem) -> Result<Self> {
        if sys.n() != self.cells || sys.m() != self.m {
            return invalid("system and control law disagree on the cell count");
        }
        self.r = sys.r().to_vec();
        Ok(self)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `U` at the time level of `partial`, whose `v(·, 1)` is not yet set.
    /// The law reads `v(1)` through its last quadrature weight, so `U` and
    /// `v(1) = R u(1)/n + U` are solved together.
    pub fn close(&self, partial: &GridState, sys: &DiscreteSystem) -> Result<Vec<f64>> {
        let (m, nx) = (self.m, self.grid.len());
        if sys.m() != m {
            return invalid("system and control law disagree on m");
        }
        let mut s = partial.clone();
        for j in 0..m {
            s.v[j * nx + nx - 1] = 0.0;
        }
        let u0 = self.apply(&s)?;
        let b = sys.boundary_term(&s);
        let wl = self.grid.weight(nx - 1);
        let last = &self.l[nx - 1];
        let a = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 } - wl * last[i * m + j]);
        let rhs = DVector::from_fn(m, |j, _| b[j] + u0[j]);
        let v1 = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("boundary closure of the control law is singular".into()))?;
        Ok((0..m).map(|j| v1[j] - b[j]).collect())
    }

    pub fn apply(&self, s: &GridState) -> Result<Vec<f64>> {
        let (n, m, nx) = (self.cells, self.m, self.grid.len());
        if s.n != n || s.m != m || s.nx != nx {
            return invalid(format!(
                "control law expects a {n}+{m} state on {nx} points, got {}+{} on {}",
                s.n, s.m, s.nx
            ));
        }
        let wn = 1.0 / n as f64;
        let mut out = vec![0.0; m];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for b in 0..nx {
                let kw = &self.k[b][i * n..(i + 1) * n];
                let lw = &self.l[b][i * m..(i + 1) * m];
                let mut col = 0.0;
                for c in 0..n {
                    col += kw[c] * s.u[c * nx + b];
                }
                let mut vcol = 0.0;
                for j in 0..m {
                    vcol += lw[j] * s.v[j * nx + b];
                }
                acc += self.grid.weight(b) * (wn * col + vcol);
            }
            let boundary: f64 = (0..n).map(|c| self.r[i * n + c] * s.u[c * nx + nx - 1]).sum();
            *o = acc - wn * boundary;
        }
        Ok(out)
    }
}

/// Observer-based law for the `n+m` plant.
pub fn control_nm_observer(obs: &GridState, law: &OutputLaw) -> Result<Vec<f64>> {
    law.apply(obs)
}

/// Continuum-observer-based law; `obs` has `n̂` rows.
pub fn control_continuum_observer(obs: &GridState, law: &OutputLaw) -> Result<Vec<f64>> {
    law.apply(obs)
}

/// Full-state law reading the plant directly.
pub fn control_state_feedback(plant: &GridState, law: &OutputLaw) -> Result<Vec<f64>> {
    law.apply(plant)
}

/// `F_n*` applied to the `u` rows of an `n̂`-row state at every x-node;
/// `v` is passed through. The overlaps of `n̂` and `n` cells are weighted
/// exactly, so `n̂` need not be a multiple of `n`, but it must resolve it.
pub fn estimate_nm_state(obs: &GridState, n: usize) -> Result<GridState> {
    if n == 0 || n > obs.n {
        return invalid(format!("cannot sample {} observer rows onto {n} cells", obs.n));
    }
    lift_state(obs, n)
}
