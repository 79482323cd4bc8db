//! Observer injection gains and control gains derived from the kernels,
//! tabulated on a simulation grid.

use super::field::{KernelField, KernelKind};
use crate::error::{invalid, Result};
use crate::model::ContinuumParams;
use crate::numerics::{XGrid, YGrid};

/// Gains for an `n`-cell discretization of the ensemble variable.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub n: usize,
    pub m: usize,
    pub grid: XGrid,
    /// `P̃₊(x)`, `[a][c * m + j]`: cell means of `M_j(x,0,·) μ_j(0)`.
    pub p_plus: Vec<Vec<f64>>,
    /// `P₋(x) = N(x,0) Λ₋(0)`, `[a][i * m + j]`.
    pub p_minus: Vec<Vec<f64>>,
    /// `K̃(1,ξ)`, `[b][i * n + c]`: cell means of `K_i(1,ξ,·)`.
    pub k: Vec<Vec<f64>>,
    /// `L(1,ξ)`, `[b][i * m + j]`.
    pub l: Vec<Vec<f64>>,
}

impl GainSet {
    pub fn zeros(n: usize, m: usize, grid: XGrid) -> Self {
        let nx = grid.len();
        Self {
            n,
            m,
            grid,
            p_plus: vec![vec![0.0; n * m]; nx],
            p_minus: vec![vec![0.0; m * m]; nx],
            k: vec![vec![0.0; m * n]; nx],
            l: vec![vec![0.0; m * m]; nx],
        }
    }
}

/// Continuum injection gain `P₊(x,y) = M(x,0,y) Λ₋(0)` on the kernel y-grid,
/// one vector per `j`.
pub fn p_plus_continuum(obs: &KernelField, c: &ContinuumParams, x: f64) -> Vec<Vec<f64>> {
    (0..obs.m())
        .map(|j| {
            let mu = c.mu(j, 0.0);
            obs.eval_ydep(j, x, 0.0).into_iter().map(|v| v * mu).collect()
        })
        .collect()
}

/// How a y-dependent kernel becomes `n` numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainSampling {
    /// `F_n*`: the mean over cell `((i−1)/n, i/n]`.
    #[default]
    CellMean,
    /// The value at `y = i/n`, where the plant coefficients are sampled.
    Node,
}

impl GainSampling {
    pub(crate) fn sample(self, ygrid: &YGrid, values: &[f64], n: usize) -> Result<Vec<f64>> {
        match self {
            GainSampling::CellMean => ygrid.cell_means(values, n),
            GainSampling::Node => Ok((1..=n).map(|i| ygrid.interpolate(values, i as f64 / n as f64)).collect()),
        }
    }
}

pub fn make_gains(obs: &KernelField, ctl: &KernelField, c: &ContinuumParams, n: usize, grid: &XGrid) -> Result<GainSet> {
    make_gains_with(obs, ctl, c, n, grid, GainSampling::CellMean)
}

pub fn make_gains_with(
    obs: &KernelField,
    ctl: &KernelField,
    c: &ContinuumParams,
    n: usize,
    grid: &XGrid,
    sampling: GainSampling,
) -> Result<GainSet> {
    if n == 0 {
        return invalid("sampled gains need n >= 1");
    }
    if obs.kind() != KernelKind::Observer || ctl.kind() != KernelKind::Control {
        return invalid("make_gains expects observer kernels and control kernels, in that order");
    }
    let m = c.m();
    if obs.m() != m || ctl.m() != m {
        return invalid(format!("kernels have m = {}/{}, parameters m = {m}", obs.m(), ctl.m()));
    }
    let mut g = GainSet::zeros(n, m, *grid);
    let mu0: Vec<f64> = (0..m).map(|j| c.mu(j, 0.0)).collect();
    for (a, x) in grid.nodes().enumerate() {
        for j in 0..m {
            let means = sampling.sample(obs.ygrid(), &obs.eval_ydep(j, x, 0.0), n)?;
            for (cell, v) in means.into_iter().enumerate() {
                g.p_plus[a][cell * m + j] = v * mu0[j];
            }
            for i in 0..m {
                g.p_minus[a][i * m + j] = obs.eval_mat(i, j, x, 0.0) * mu0[j];
                g.l[a][i * m + j] = ctl.eval_mat(i, j, 1.0, x);
            }
        }
        for i in 0..m {
            let means = sampling.sample(ctl.ygrid(), &ctl.eval_ydep(i, 1.0, x), n)?;
            g.k[a][i * n..(i + 1) * n].copy_from_slice(&means);
        }
    }
    Ok(g)
}
