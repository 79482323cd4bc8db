//! Successive approximation of the control and observer kernel equations.
//!
//! Each outer iteration evaluates the coupling terms from the latest
//! iterate and transports every component along its characteristics (see
//! [`super::sweep`]). The y-dependent components are updated first, so the
//! functional boundary conditions `N(1,ξ) = ∫R M(1,ξ,·)` and
//! `L(x,0) = ∫K(x,0,·)λQ / μ` always use the newest values.

use std::fmt;
use std::sync::Arc;

use super::field::{CornerRecord, Edge, KernelField, KernelKind};
use super::mesh::{node_index, Family, TriMesh};
use super::sweep::{Direction, EdgeData, Plan, Transport};
use crate::error::{invalid, Error, Result};
use crate::model::ContinuumParams;
use crate::numerics::YGrid;

/// Free boundary data: `n_{i,j}(x)` (observer, `i < j`) or `l_{i,j}(ξ)`
/// (control, `j < i`). Zero-based indices.
pub type ArtificialBc = Arc<dyn Fn(usize, usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct KernelSolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Defaults to the constant equal to the corner compatibility value.
    pub artificial: Option<ArtificialBc>,
}

impl Default for KernelSolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            artificial: None,
        }
    }
}

impl fmt::Debug for KernelSolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSolverConfig")
            .field("tol", &self.tol)
            .field("max_iter", &self.max_iter)
            .field("artificial", &self.artificial.is_some())
            .finish()
    }
}

/// Coefficients sampled at the `ξ` values of the mesh columns.
struct Tables {
    n: usize,
    ny: usize,
    wy: Vec<f64>,
    /// `[b][k * ny + l] = σ(ξ_b, y_k, y_l) w_l` (observer orientation) or
    /// `σ(ξ_b, y_l, y_k) w_l` (control orientation).
    sigma: Option<Vec<f64>>,
    /// `[ℓ][b * ny + k]`
    w: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    /// `[i * m + ℓ][b]`
    psi: Vec<Vec<f64>>,
}

impl Tables {
    fn new(c: &ContinuumParams, mesh: &TriMesh, yg: &YGrid, kind: KernelKind) -> Self {
        let (n, ny, m) = (mesh.resolution(), yg.len(), c.m());
        let ys: Vec<f64> = yg.nodes().collect();
        let wy = yg.weights().to_vec();
        let mut sigma = vec![0.0; n * ny * ny];
        let mut nonzero = false;
        for b in 0..n {
            let xi = mesh.x(b);
            for k in 0..ny {
                for l in 0..ny {
                    let s = match kind {
                        KernelKind::Observer => c.sigma(xi, ys[k], ys[l]),
                        KernelKind::Control => c.sigma(xi, ys[l], ys[k]),
                    };
                    nonzero |= s != 0.0;
                    sigma[(b * ny + k) * ny + l] = s * wy[l];
                }
            }
        }
        let tab = |f: &dyn Fn(usize, f64, f64) -> f64| -> Vec<Vec<f64>> {
            (0..m)
                .map(|l| {
                    let mut v = Vec::with_capacity(n * ny);
                    for b in 0..n {
                        for &y in &ys {
                            v.push(f(l, mesh.x(b), y));
                        }
                    }
                    v
                })
                .collect()
        };
        let w = tab(&|l, x, y| c.w(l, x, y));
        let theta = tab(&|l, x, y| c.theta(l, x, y));
        let psi = (0..m * m)
            .map(|il| (0..n).map(|b| c.psi(il / m, il % m, mesh.x(b))).collect())
            .collect();
        Self {
            n,
            ny,
            wy,
            sigma: nonzero.then_some(sigma),
            w,
            theta,
            psi,
        }
    }

    /// `out[iy] += Σ_l S[b][iy][l] v[l]`
    fn sigma_apply(&self, b: usize, v: &[f64], out: &mut [f64]) {
        if let Some(s) = &self.sigma {
            let ny = self.ny;
            let block = &s[b * ny * ny..(b + 1) * ny * ny];
            for (o, row) in out.iter_mut().zip(block.chunks_exact(ny)) {
                *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
}

fn lambda_uniform(c: &ContinuumParams, mesh: &TriMesh, yg: &YGrid) -> bool {
    let ys: Vec<f64> = yg.nodes().collect();
    (0..mesh.resolution()).all(|a| {
        let x = mesh.x(a);
        let (l0, d0) = (c.lambda(x, ys[0]), c.lambda_x(x, ys[0]));
        ys.iter().all(|&y| c.lambda(x, y) == l0 && c.lambda_x(x, y) == d0)
    })
}

fn label(kind: KernelKind, i: usize, j: usize) -> String {
    format!("{}_{}_{}", kind.names().1, i + 1, j + 1)
}

fn check_artificial(
    cfg: &KernelSolverConfig,
    i: usize,
    j: usize,
    at: f64,
    compat: f64,
    what: &str,
) -> Result<()> {
    if let Some(f) = &cfg.artificial {
        let v = f(i, j, at);
        if (v - compat).abs() > 1e-9 * compat.abs().max(1.0) {
            return invalid(format!(
                "artificial boundary data {what}_{}_{}({at}) = {v} is incompatible with the corner value {compat}",
                i + 1,
                j + 1
            ));
        }
    }
    Ok(())
}

/// Solves the observer kernel equations for `M` and `N`.
pub fn solve_observer_kernels(
    c: &ContinuumParams,
    mesh: &Arc<TriMesh>,
    ygrid: &YGrid,
    cfg: &KernelSolverConfig,
) -> Result<KernelField> {
    let m = c.m();
    if mesh.m() != m {
        return invalid(format!("mesh built for m = {}, parameters have m = {m}", mesh.m()));
    }
    let tables = Tables::new(c, mesh, ygrid, KernelKind::Observer);
    let (n, ny) = (tables.n, tables.ny);
    let ys: Vec<f64> = ygrid.nodes().collect();
    let uniform = lambda_uniform(c, mesh, ygrid);

    let artificial = |i: usize, j: usize, x: f64| -> f64 {
        match &cfg.artificial {
            Some(f) => f(i, j, x),
            None => c.psi(i, j, 0.0) / (c.mu(j, 0.0) - c.mu(i, 0.0)),
        }
    };
    for i in 0..m {
        for j in i + 1..m {
            let compat = c.psi(i, j, 0.0) / (c.mu(j, 0.0) - c.mu(i, 0.0));
            check_artificial(cfg, i, j, 0.0, compat, "n")?;
        }
    }

    // transport operators
    let m_coef: Vec<Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync + '_>> = (0..m)
        .map(|j| {
            let ys = &ys;
            Box::new(move |x: f64, xi: f64, iy: usize| {
                (c.lambda(x, ys[iy]), -c.mu(j, xi), c.mu_prime(j, xi))
            }) as Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync>
        })
        .collect();
    let m_diag: Vec<Box<dyn Fn(f64, usize) -> f64 + Sync + '_>> = (0..m)
        .map(|j| {
            let ys = &ys;
            Box::new(move |x: f64, iy: usize| {
                let y = ys[iy];
                c.w(j, x, y) / (c.mu(j, x) + c.lambda(x, y))
            }) as Box<dyn Fn(f64, usize) -> f64 + Sync>
        })
        .collect();
    let n_coef: Vec<Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync + '_>> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            Box::new(move |x: f64, xi: f64, _iy: usize| (c.mu(i, x), c.mu(j, xi), -c.mu_prime(j, xi)))
                as Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync>
        })
        .collect();
    let n_diag: Vec<Box<dyn Fn(f64, usize) -> f64 + Sync + '_>> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            Box::new(move |x: f64, _iy: usize| c.psi(i, j, x) / (c.mu(j, x) - c.mu(i, x)))
                as Box<dyn Fn(f64, usize) -> f64 + Sync>
        })
        .collect();

    let m_ops: Vec<Transport> = (0..m)
        .map(|j| Transport {
            mesh,
            family: Family::Observer(j),
            dir: Direction::Backward,
            ny,
            coef: &*m_coef[j],
            uniform,
            diag: Some(&*m_diag[j]),
            has_bottom: false,
            has_right: false,
        })
        .collect();
    let n_ops: Vec<Transport> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            Transport {
                mesh,
                family: Family::Observer(j),
                dir: if i < j { Direction::Backward } else { Direction::Forward },
                ny: 1,
                coef: &*n_coef[ij],
                uniform: true,
                diag: (i != j).then_some(&*n_diag[ij]),
                has_bottom: i < j,
                has_right: i >= j,
            }
        })
        .collect();
    let m_plans: Vec<Option<Vec<Plan>>> =
        m_ops.iter().map(|t| t.uniform.then(|| t.plans())).collect();
    let n_plans: Vec<Vec<Plan>> = n_ops.iter().map(|t| t.plans()).collect();

    // artificial data on the bottom edge is fixed
    let bottoms: Vec<Vec<f64>> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            if i < j {
                (0..n).map(|a| artificial(i, j, mesh.x(a))).collect()
            } else {
                Vec::new()
            }
        })
        .collect();

    let mut field = KernelField::zeros(KernelKind::Observer, mesh.clone(), ygrid.clone());
    let nodes = mesh.len();
    let mut g_y = vec![0.0; nodes * ny];
    let mut g_m = vec![0.0; nodes];
    let mut right = vec![0.0; n];
    let mut history = Vec::new();
    let mut scratch = vec![0.0; nodes * ny];
    let mut scratch_m = vec![0.0; nodes];
    let r_tab: Vec<Vec<f64>> = (0..m).map(|i| ys.iter().map(|&y| c.r(i, y)).collect()).collect();

    for iter in 1..=cfg.max_iter {
        let mut diff: f64 = 0.0;
        for j in 0..m {
            // g = ∫σ M_j dη + Σ_ℓ W_ℓ N_{ℓ,j}
            for a in 0..n {
                for b in 0..=a {
                    let k = node_index(a, b);
                    let out = &mut g_y[k * ny..(k + 1) * ny];
                    out.fill(0.0);
                    tables.sigma_apply(b, field.ydep_at(j, k), out);
                    for l in 0..m {
                        let nv = field.mat(l, j)[k];
                        if nv != 0.0 {
                            let wrow = &tables.w[l][b * ny..(b + 1) * ny];
                            for (o, w) in out.iter_mut().zip(wrow) {
                                *o += w * nv;
                            }
                        }
                    }
                }
            }
            scratch.copy_from_slice(field.ydep(j));
            let edges = EdgeData { bottom: None, right: None };
            m_ops[j].solve(m_plans[j].as_deref(), &g_y, &mut scratch, &edges);
            let (yd, _) = field.parts_mut();
            diff = diff.max(sup_diff(&yd[j], &scratch));
            yd[j].copy_from_slice(&scratch);
        }
        for j in 0..m {
            for i in 0..m {
                // g = ∫Θ_i M_j dy + Σ_ℓ Ψ_{i,ℓ} N_{ℓ,j}
                for a in 0..n {
                    for b in 0..=a {
                        let k = node_index(a, b);
                        let mv = field.ydep_at(j, k);
                        let th = &tables.theta[i][b * ny..(b + 1) * ny];
                        let mut acc: f64 = mv
                            .iter()
                            .zip(th)
                            .zip(&tables.wy)
                            .map(|((mm, t), w)| mm * t * w)
                            .sum();
                        for l in 0..m {
                            acc += tables.psi[i * m + l][b] * field.mat(l, j)[k];
                        }
                        g_m[k] = acc;
                    }
                }
                if i >= j {
                    for (b, r) in right.iter_mut().enumerate() {
                        let mv = field.ydep_at(j, node_index(n - 1, b));
                        *r = mv
                            .iter()
                            .zip(&r_tab[i])
                            .zip(&tables.wy)
                            .map(|((mm, rr), w)| mm * rr * w)
                            .sum();
                    }
                }
                let edges = EdgeData {
                    bottom: (i < j).then_some(bottoms[i * m + j].as_slice()),
                    right: (i >= j).then_some(right.as_slice()),
                };
                scratch_m.copy_from_slice(field.mat(i, j));
                n_ops[i * m + j].solve(Some(&n_plans[i * m + j]), &g_m, &mut scratch_m, &edges);
                let (_, mat) = field.parts_mut();
                diff = diff.max(sup_diff(&mat[i * m + j], &scratch_m));
                mat[i * m + j].copy_from_slice(&scratch_m);
            }
        }
        history.push(diff);
        log::debug!("observer kernels: iteration {iter}, update {diff:.3e}");
        if !diff.is_finite() {
            break;
        }
        if diff < cfg.tol {
            // N(1,1) is overdetermined for i > j
            for j in 0..m {
                for i in j + 1..m {
                    let k = node_index(n - 1, n - 1);
                    field.corners.push(CornerRecord {
                        component: label(KernelKind::Observer, i, j),
                        x: 1.0,
                        xi: 1.0,
                        chosen_edge: Edge::Right,
                        chosen: field.mat(i, j)[k],
                        other_edge: Edge::Diagonal,
                        other: c.psi(i, j, 1.0) / (c.mu(j, 1.0) - c.mu(i, 1.0)),
                    });
                }
            }
            field.history = history;
            return Ok(field);
        }
    }
    Err(Error::SolverFailure {
        what: "observer kernel iteration",
        iterations: history.len(),
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Solves the control kernel equations for `K` and `L`.
pub fn solve_control_kernels(
    c: &ContinuumParams,
    mesh: &Arc<TriMesh>,
    ygrid: &YGrid,
    cfg: &KernelSolverConfig,
) -> Result<KernelField> {
    let m = c.m();
    if mesh.m() != m {
        return invalid(format!("mesh built for m = {}, parameters have m = {m}", mesh.m()));
    }
    let tables = Tables::new(c, mesh, ygrid, KernelKind::Control);
    let (n, ny) = (tables.n, tables.ny);
    let ys: Vec<f64> = ygrid.nodes().collect();
    let uniform = lambda_uniform(c, mesh, ygrid);

    let artificial = |i: usize, j: usize, xi: f64| -> f64 {
        match &cfg.artificial {
            Some(f) => f(i, j, xi),
            None => -c.psi(i, j, 1.0) / (c.mu(i, 1.0) - c.mu(j, 1.0)),
        }
    };
    for i in 0..m {
        for j in 0..i {
            let compat = -c.psi(i, j, 1.0) / (c.mu(i, 1.0) - c.mu(j, 1.0));
            check_artificial(cfg, i, j, 1.0, compat, "l")?;
        }
    }

    let k_coef: Vec<Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync + '_>> = (0..m)
        .map(|i| {
            let ys = &ys;
            Box::new(move |x: f64, xi: f64, iy: usize| {
                let y = ys[iy];
                (c.mu(i, x), -c.lambda(xi, y), c.lambda_x(xi, y))
            }) as Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync>
        })
        .collect();
    let k_diag: Vec<Box<dyn Fn(f64, usize) -> f64 + Sync + '_>> = (0..m)
        .map(|i| {
            let ys = &ys;
            Box::new(move |x: f64, iy: usize| {
                let y = ys[iy];
                -c.theta(i, x, y) / (c.lambda(x, y) + c.mu(i, x))
            }) as Box<dyn Fn(f64, usize) -> f64 + Sync>
        })
        .collect();
    let l_coef: Vec<Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync + '_>> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            Box::new(move |x: f64, xi: f64, _iy: usize| (c.mu(i, x), c.mu(j, xi), -c.mu_prime(j, xi)))
                as Box<dyn Fn(f64, f64, usize) -> (f64, f64, f64) + Sync>
        })
        .collect();
    let l_diag: Vec<Box<dyn Fn(f64, usize) -> f64 + Sync + '_>> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            Box::new(move |x: f64, _iy: usize| c.psi(i, j, x) / (c.mu(j, x) - c.mu(i, x)))
                as Box<dyn Fn(f64, usize) -> f64 + Sync>
        })
        .collect();

    let k_ops: Vec<Transport> = (0..m)
        .map(|i| Transport {
            mesh,
            family: Family::Control(i),
            dir: Direction::Backward,
            ny,
            coef: &*k_coef[i],
            uniform,
            diag: Some(&*k_diag[i]),
            has_bottom: false,
            has_right: false,
        })
        .collect();
    let l_ops: Vec<Transport> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            Transport {
                mesh,
                family: Family::Control(i),
                dir: if i <= j { Direction::Backward } else { Direction::Forward },
                ny: 1,
                coef: &*l_coef[ij],
                uniform: true,
                diag: (i != j).then_some(&*l_diag[ij]),
                has_bottom: i <= j,
                has_right: j < i,
            }
        })
        .collect();
    let k_plans: Vec<Option<Vec<Plan>>> =
        k_ops.iter().map(|t| t.uniform.then(|| t.plans())).collect();
    let l_plans: Vec<Vec<Plan>> = l_ops.iter().map(|t| t.plans()).collect();

    let rights: Vec<Vec<f64>> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            if j < i {
                (0..n).map(|b| artificial(i, j, mesh.x(b))).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    // λ(0,y) Q_j(y) w(y) / μ_j(0)
    let q_tab: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            ys.iter()
                .zip(&tables.wy)
                .map(|(&y, w)| c.lambda(0.0, y) * c.q(j, y) * w / c.mu(j, 0.0))
                .collect()
        })
        .collect();

    let mut field = KernelField::zeros(KernelKind::Control, mesh.clone(), ygrid.clone());
    let nodes = mesh.len();
    let mut g_y = vec![0.0; nodes * ny];
    let mut g_m = vec![0.0; nodes];
    let mut bottom = vec![0.0; n];
    let mut history = Vec::new();
    let mut scratch = vec![0.0; nodes * ny];
    let mut scratch_m = vec![0.0; nodes];

    for iter in 1..=cfg.max_iter {
        let mut diff: f64 = 0.0;
        for i in 0..m {
            // g = Σ_ℓ L_{i,ℓ} Θ_ℓ + ∫K_i(η) σ(ξ,η,y) dη
            for a in 0..n {
                for b in 0..=a {
                    let k = node_index(a, b);
                    let out = &mut g_y[k * ny..(k + 1) * ny];
                    out.fill(0.0);
                    tables.sigma_apply(b, field.ydep_at(i, k), out);
                    for l in 0..m {
                        let lv = field.mat(i, l)[k];
                        if lv != 0.0 {
                            let trow = &tables.theta[l][b * ny..(b + 1) * ny];
                            for (o, t) in out.iter_mut().zip(trow) {
                                *o += t * lv;
                            }
                        }
                    }
                }
            }
            scratch.copy_from_slice(field.ydep(i));
            let edges = EdgeData { bottom: None, right: None };
            k_ops[i].solve(k_plans[i].as_deref(), &g_y, &mut scratch, &edges);
            let (yd, _) = field.parts_mut();
            diff = diff.max(sup_diff(&yd[i], &scratch));
            yd[i].copy_from_slice(&scratch);
        }
        for i in 0..m {
            for j in 0..m {
                // g = Σ_ℓ L_{i,ℓ} Ψ_{ℓ,j} + ∫K_i W_j dy
                for a in 0..n {
                    for b in 0..=a {
                        let k = node_index(a, b);
                        let kv = field.ydep_at(i, k);
                        let wr = &tables.w[j][b * ny..(b + 1) * ny];
                        let mut acc: f64 = kv
                            .iter()
                            .zip(wr)
                            .zip(&tables.wy)
                            .map(|((kk, w), q)| kk * w * q)
                            .sum();
                        for l in 0..m {
                            acc += field.mat(i, l)[k] * tables.psi[l * m + j][b];
                        }
                        g_m[k] = acc;
                    }
                }
                if i <= j {
                    for (a, bv) in bottom.iter_mut().enumerate() {
                        let kv = field.ydep_at(i, node_index(a, 0));
                        *bv = kv.iter().zip(&q_tab[j]).map(|(kk, q)| kk * q).sum();
                    }
                }
                let edges = EdgeData {
                    bottom: (i <= j).then_some(bottom.as_slice()),
                    right: (j < i).then_some(rights[i * m + j].as_slice()),
                };
                scratch_m.copy_from_slice(field.mat(i, j));
                l_ops[i * m + j].solve(Some(&l_plans[i * m + j]), &g_m, &mut scratch_m, &edges);
                let (_, mat) = field.parts_mut();
                diff = diff.max(sup_diff(&mat[i * m + j], &scratch_m));
                mat[i * m + j].copy_from_slice(&scratch_m);
            }
        }
        history.push(diff);
        log::debug!("control kernels: iteration {iter}, update {diff:.3e}");
        if !diff.is_finite() {
            break;
        }
        if diff < cfg.tol {
            // L(0,0) is overdetermined for i < j
            for i in 0..m {
                for j in i + 1..m {
                    field.corners.push(CornerRecord {
                        component: label(KernelKind::Control, i, j),
                        x: 0.0,
                        xi: 0.0,
                        chosen_edge: Edge::Bottom,
                        chosen: field.mat(i, j)[0],
                        other_edge: Edge::Diagonal,
                        other: c.psi(i, j, 0.0) / (c.mu(j, 0.0) - c.mu(i, 0.0)),
                    });
                }
            }
            field.history = history;
            return Ok(field);
        }
    }
    Err(Error::SolverFailure {
        what: "control kernel iteration",
        iterations: history.len(),
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}
