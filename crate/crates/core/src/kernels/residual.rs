//! Finite-difference check of a tabulated kernel field against its
//! equations and boundary conditions.

use serde::Serialize;

use super::field::{KernelField, KernelKind};
use super::mesh::node_index;
use super::solver::KernelSolverConfig;
use crate::model::ContinuumParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionResidual {
    pub component: String,
    pub region: u8,
    /// Largest interior residual in the region (over nodes and `y`).
    pub max: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryError {
    pub component: String,
    pub condition: &'static str,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResidualReport {
    pub regions: Vec<RegionResidual>,
    pub boundaries: Vec<BoundaryError>,
}

impl ResidualReport {
    pub fn interior_max(&self) -> f64 {
        self.regions.iter().map(|r| r.max).fold(0.0, f64::max)
    }

    pub fn boundary_max(&self) -> f64 {
        self.boundaries.iter().map(|b| b.max).fold(0.0, f64::max)
    }
}

/// Kernel equation residuals using one-sided differences that stay inside
/// the region of each node, and the boundary-condition errors at nodes.
///
/// Only nodes strictly inside the triangle enter the interior residual.
/// The overdetermined corners `N(1,1)` (`i > j`) and `L(0,0)` (`i < j`) are
/// checked against the edge the solver prefers (`x = 1` and `ξ = 0`).
pub fn kernel_residual(field: &KernelField, c: &ContinuumParams, cfg: &KernelSolverConfig) -> ResidualReport {
    let mesh = field.mesh();
    let (n, m, ny) = (mesh.resolution(), field.m(), field.ny());
    let h = mesh.spacing();
    let ys: Vec<f64> = field.ygrid().nodes().collect();
    let wy = field.ygrid().weights();
    let (yname, mname) = field.kind().names();
    let kind = field.kind();
    let mut report = ResidualReport::default();

    // derivative of a nodal quantity, one-sided within region `p`
    let deriv = |labels: &[u8], p: u8, a: usize, b: usize, val: &dyn Fn(usize) -> f64, along_x: bool| -> Option<f64> {
        let k = node_index(a, b);
        let here = val(k);
        let neighbor = |da: isize, db: isize| -> Option<usize> {
            let (a2, b2) = (a as isize + da, b as isize + db);
            if a2 < 0 || b2 < 0 || a2 as usize >= n || b2 > a2 {
                return None;
            }
            let k2 = node_index(a2 as usize, b2 as usize);
            (labels[k2] == p).then_some(k2)
        };
        let (fwd, bwd) = if along_x { (neighbor(1, 0), neighbor(-1, 0)) } else { (neighbor(0, 1), neighbor(0, -1)) };
        match (fwd, bwd) {
            (Some(f), _) => Some((val(f) - here) / h),
            (None, Some(b)) => Some((here - val(b)) / h),
            (None, None) => None,
        }
    };

    // y-dependent components
    for cidx in 0..m {
        let fam = field.y_family(cidx);
        let labels = mesh.region_ids(fam);
        let mut per_region: Vec<(f64, usize)> = vec![(0.0, 0); m];
        let data = field.ydep(cidx);
        for a in 1..n - 1 {
            for b in 1..a {
                let k = node_index(a, b);
                let p = labels[k];
                let (x, xi) = (mesh.x(a), mesh.x(b));
                let mut worst: Option<f64> = None;
                for (iy, &y) in ys.iter().enumerate() {
                    let val = |kk: usize| data[kk * ny + iy];
                    let (Some(dx), Some(dxi)) = (deriv(labels, p, a, b, &val, true), deriv(labels, p, a, b, &val, false)) else {
                        break;
                    };
                    let f = val(k);
                    let r = match kind {
                        KernelKind::Observer => {
                            let lhs = c.lambda(x, y) * dx - c.mu(cidx, xi) * dxi;
                            let sig: f64 = (0..ny).map(|l| c.sigma(xi, y, ys[l]) * data[k * ny + l] * wy[l]).sum();
                            let cpl: f64 = (0..m).map(|l| c.w(l, xi, y) * field.mat(l, cidx)[k]).sum();
                            lhs - (c.mu_prime(cidx, xi) * f + sig + cpl)
                        }
                        KernelKind::Control => {
                            let lhs = c.mu(cidx, x) * dx - c.lambda(xi, y) * dxi;
                            let sig: f64 = (0..ny).map(|l| c.sigma(xi, ys[l], y) * data[k * ny + l] * wy[l]).sum();
                            let cpl: f64 = (0..m).map(|l| field.mat(cidx, l)[k] * c.theta(l, xi, y)).sum();
                            lhs - (c.lambda_x(xi, y) * f + sig + cpl)
                        }
                    };
                    worst = Some(worst.unwrap_or(0.0).max(r.abs()));
                }
                if let Some(w) = worst {
                    let e = &mut per_region[p as usize];
                    e.0 = e.0.max(w);
                    e.1 += 1;
                }
            }
        }
        for (p, &(max, nodes)) in per_region.iter().enumerate().skip(fam.index()) {
            report.regions.push(RegionResidual {
                component: format!("{yname}_{}", cidx + 1),
                region: p as u8,
                max,
                nodes,
            });
        }
    }

    // matrix components
    for i in 0..m {
        for j in 0..m {
            let fam = field.mat_family(i, j);
            let labels = mesh.region_ids(fam);
            let data = field.mat(i, j);
            let mut per_region: Vec<(f64, usize)> = vec![(0.0, 0); m];
            let val = |kk: usize| data[kk];
            for a in 1..n - 1 {
                for b in 1..a {
                    let k = node_index(a, b);
                    let p = labels[k];
                    let (x, xi) = (mesh.x(a), mesh.x(b));
                    let (Some(dx), Some(dxi)) = (deriv(labels, p, a, b, &val, true), deriv(labels, p, a, b, &val, false)) else {
                        continue;
                    };
                    let lhs = c.mu(i, x) * dx + c.mu(j, xi) * dxi;
                    let r = match kind {
                        KernelKind::Observer => {
                            let mj = field.ydep_at(j, k);
                            let integ: f64 = (0..ny).map(|l| c.theta(i, xi, ys[l]) * mj[l] * wy[l]).sum();
                            let cpl: f64 = (0..m).map(|l| c.psi(i, l, xi) * field.mat(l, j)[k]).sum();
                            lhs - (-c.mu_prime(j, xi) * data[k] + integ + cpl)
                        }
                        KernelKind::Control => {
                            let ki = field.ydep_at(i, k);
                            let integ: f64 = (0..ny).map(|l| ki[l] * c.w(j, xi, ys[l]) * wy[l]).sum();
                            let cpl: f64 = (0..m).map(|l| field.mat(i, l)[k] * c.psi(l, j, xi)).sum();
                            lhs - (-c.mu_prime(j, xi) * data[k] + integ + cpl)
                        }
                    };
                    let e = &mut per_region[p as usize];
                    e.0 = e.0.max(r.abs());
                    e.1 += 1;
                }
            }
            for (p, &(max, nodes)) in per_region.iter().enumerate().skip(fam.index()) {
                report.regions.push(RegionResidual {
                    component: format!("{mname}_{}_{}", i + 1, j + 1),
                    region: p as u8,
                    max,
                    nodes,
                });
            }
        }
    }

    report.boundaries = boundary_errors(field, c, cfg);
    report
}

fn boundary_errors(field: &KernelField, c: &ContinuumParams, cfg: &KernelSolverConfig) -> Vec<BoundaryError> {
    let mesh = field.mesh();
    let (n, m, ny) = (mesh.resolution(), field.m(), field.ny());
    let ys: Vec<f64> = field.ygrid().nodes().collect();
    let wy = field.ygrid().weights();
    let (yname, mname) = field.kind().names();
    let mut out = Vec::new();
    let mut push = |component: String, condition: &'static str, errs: &mut dyn Iterator<Item = f64>| {
        let max = errs.map(f64::abs).fold(0.0, f64::max);
        out.push(BoundaryError { component, condition, max });
    };
    let diag = |a: usize| node_index(a, a);
    let right = |b: usize| node_index(n - 1, b);
    let bottom = |a: usize| node_index(a, 0);
    let art = |i: usize, j: usize, s: f64, default: f64| cfg.artificial.as_ref().map_or(default, |f| f(i, j, s));

    match field.kind() {
        KernelKind::Observer => {
            for j in 0..m {
                push(
                    format!("{yname}_{}", j + 1),
                    "diagonal",
                    &mut (0..n).flat_map(|a| {
                        let x = mesh.x(a);
                        let v = field.ydep_at(j, diag(a));
                        ys.iter().enumerate().map(move |(iy, &y)| v[iy] - c.w(j, x, y) / (c.mu(j, x) + c.lambda(x, y)))
                    }),
                );
            }
            for i in 0..m {
                for j in 0..m {
                    let name = format!("{mname}_{}_{}", i + 1, j + 1);
                    let d = field.mat(i, j);
                    if i != j {
                        let last = if i > j { n - 1 } else { n };
                        push(
                            name.clone(),
                            "diagonal",
                            &mut (0..last).map(|a| {
                                let x = mesh.x(a);
                                d[diag(a)] - c.psi(i, j, x) / (c.mu(j, x) - c.mu(i, x))
                            }),
                        );
                    }
                    if i >= j {
                        push(
                            name.clone(),
                            "x=1",
                            &mut (0..n).map(|b| {
                                let mv = field.ydep_at(j, right(b));
                                let integ: f64 = (0..ny).map(|l| c.r(i, ys[l]) * mv[l] * wy[l]).sum();
                                d[right(b)] - integ
                            }),
                        );
                    } else {
                        let n0 = c.psi(i, j, 0.0) / (c.mu(j, 0.0) - c.mu(i, 0.0));
                        push(
                            name,
                            "xi=0",
                            &mut (0..n).map(|a| d[bottom(a)] - art(i, j, mesh.x(a), n0)),
                        );
                    }
                }
            }
        }
        KernelKind::Control => {
            for i in 0..m {
                push(
                    format!("{yname}_{}", i + 1),
                    "diagonal",
                    &mut (0..n).flat_map(|a| {
                        let x = mesh.x(a);
                        let v = field.ydep_at(i, diag(a));
                        ys.iter().enumerate().map(move |(iy, &y)| v[iy] + c.theta(i, x, y) / (c.lambda(x, y) + c.mu(i, x)))
                    }),
                );
            }
            for i in 0..m {
                for j in 0..m {
                    let name = format!("{mname}_{}_{}", i + 1, j + 1);
                    let d = field.mat(i, j);
                    if i != j {
                        let first = usize::from(i < j);
                        push(
                            name.clone(),
                            "diagonal",
                            &mut (first..n).map(|a| {
                                let x = mesh.x(a);
                                d[diag(a)] - c.psi(i, j, x) / (c.mu(j, x) - c.mu(i, x))
                            }),
                        );
                    }
                    if i <= j {
                        push(
                            name.clone(),
                            "xi=0",
                            &mut (0..n).map(|a| {
                                let kv = field.ydep_at(i, bottom(a));
                                let integ: f64 = (0..ny)
                                    .map(|l| kv[l] * c.lambda(0.0, ys[l]) * c.q(j, ys[l]) * wy[l])
                                    .sum();
                                d[bottom(a)] - integ / c.mu(j, 0.0)
                            }),
                        );
                    } else {
                        let l1 = -c.psi(i, j, 1.0) / (c.mu(i, 1.0) - c.mu(j, 1.0));
                        push(
                            name,
                            "x=1",
                            &mut (0..n).map(|b| d[right(b)] - art(i, j, mesh.x(b), l1)),
                        );
                    }
                }
            }
        }
    }
    out
}
