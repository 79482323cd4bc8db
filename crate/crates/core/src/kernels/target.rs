//! Coefficients of the observer error target system: `D₋`, `D₊`, `H`, and
//! the Lyapunov weights built from their bounds.
//!
//! `Θ(ξ, y)` does not depend on the integration variable of the `D₋`
//! Volterra equation, so `D₋(x,ξ,y) = G(x,ξ) Θ(ξ,y)` with the `m×m` kernel
//!
//! ```text
//! G(x,ξ) = −N(x,ξ) − ∫_ξ^x N(x,s) G(s,ξ) ds,
//! ```
//!
//! and likewise `D₊(x,ξ,y,η) = Gp(x,ξ,y) · Θ(ξ,η)` with
//! `Gp(x,ξ,y) = −M(x,ξ,y) − ∫_ξ^x M(x,s,y) G(s,ξ) ds`.

use std::sync::Arc;

use serde::Serialize;
use smallvec::SmallVec;

use super::field::{KernelField, KernelKind};
use super::mesh::{node_index, Family, TriMesh};
use crate::error::{invalid, Error, Result};
use crate::model::ContinuumParams;

const BISECT_STEPS: usize = 48;

type RowStencil = SmallVec<[(usize, f64); 2]>;

#[derive(Debug, Clone, Copy)]
pub struct DMinusConfig {
    /// Quadrature points per mesh spacing.
    pub refine: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DMinusConfig {
    fn default() -> Self {
        Self { refine: 4, tol: 1e-12, max_iter: 200 }
    }
}

/// `G` along one mesh row `ξ = ξ_b` on the refined abscissae
/// `s_r = ξ_b + r h / refine`.
#[derive(Debug, Clone)]
struct Row {
    xi: f64,
    step: f64,
    /// `[r * m * m + i * m + j]`
    vals: Vec<f64>,
    /// `[j][r]`: region of `(s_r, ξ_b)` in the family of column `j`.
    labels: Vec<Vec<u8>>,
}

impl Row {
    fn len(&self) -> usize {
        self.labels[0].len()
    }

    fn s(&self, r: usize) -> f64 {
        self.xi + r as f64 * self.step
    }

    /// Weights over `r` giving column `j` of `G(s, ξ_b)` on the smooth piece
    /// of region `p`.
    fn stencil(&self, j: usize, p: u8, s: f64, at: Option<usize>) -> RowStencil {
        let labels = &self.labels[j];
        let mut st = RowStencil::new();
        if let Some(r) = at {
            if labels[r] == p {
                st.push((r, 1.0));
                return st;
            }
        }
        let last = self.len() - 1;
        let base = (((s - self.xi) / self.step).floor().max(0.0) as usize).min(last);
        for reach in [2usize, 4, last.max(1)] {
            let lo = base.saturating_sub(reach - 1);
            let hi = (base + reach).min(last);
            let mut cand: SmallVec<[usize; 8]> = (lo..=hi).filter(|&r| labels[r] == p).collect();
            if cand.is_empty() {
                continue;
            }
            cand.sort_by(|&a, &b| (self.s(a) - s).abs().total_cmp(&(self.s(b) - s).abs()));
            if cand.len() == 1 {
                st.push((cand[0], 1.0));
            } else {
                let (r0, r1) = (cand[0], cand[1]);
                let w = (s - self.s(r0)) / (self.s(r1) - self.s(r0));
                st.push((r0, 1.0 - w));
                st.push((r1, w));
            }
            return st;
        }
        st.push((base, 1.0));
        st
    }
}

/// `D₋` through its `m×m` factor `G`.
#[derive(Debug, Clone)]
pub struct DMinus {
    mesh: Arc<TriMesh>,
    m: usize,
    refine: usize,
    rows: Vec<Row>,
    /// Picard iterations used, per row.
    pub iterations: Vec<usize>,
}

impl DMinus {
    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    /// `G_{i,j}` at mesh node `(a, b)`.
    pub fn g(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let m = self.m;
        self.rows[b].vals[self.refine * (a - b) * m * m + i * m + j]
    }

    /// `D₋_i(x_a, ξ_b, y)` for every `i`, with `y` on the given nodes.
    pub fn eval(&self, c: &ContinuumParams, a: usize, b: usize, ys: &[f64]) -> Vec<Vec<f64>> {
        let xi = self.mesh.x(b);
        (0..self.m)
            .map(|i| {
                ys.iter()
                    .map(|&y| (0..self.m).map(|j| self.g(i, j, a, b) * c.theta(j, xi, y)).sum())
                    .collect()
            })
            .collect()
    }

    /// Largest difference of `G` at mesh nodes.
    pub fn sup_diff(&self, other: &DMinus) -> f64 {
        let n = self.mesh.resolution();
        let mut d: f64 = 0.0;
        for a in 0..n {
            for b in 0..=a {
                for i in 0..self.m {
                    for j in 0..self.m {
                        d = d.max((self.g(i, j, a, b) - other.g(i, j, a, b)).abs());
                    }
                }
            }
        }
        d
    }

    /// `max_j sup ‖D₋_j(x,ξ,·)‖_{L²}` over mesh nodes.
    pub fn bound(&self, c: &ContinuumParams, field: &KernelField) -> f64 {
        let ys: Vec<f64> = field.ygrid().nodes().collect();
        let wy = field.ygrid().weights();
        let n = self.mesh.resolution();
        let mut best: f64 = 0.0;
        for a in 0..n {
            for b in 0..=a {
                for d in self.eval(c, a, b, &ys) {
                    let sq: f64 = d.iter().zip(wy).map(|(v, w)| v * v * w).sum();
                    best = best.max(sq.sqrt());
                }
            }
        }
        best
    }
}

/// `D₊` through the factor `Gp`, tabulated on the mesh and the y-grid.
#[derive(Debug, Clone)]
pub struct DPlus {
    ny: usize,
    m: usize,
    /// `[j][k * ny + iy]`
    gp: Vec<Vec<f64>>,
}

impl DPlus {
    pub fn gp(&self, j: usize, k: usize) -> &[f64] {
        &self.gp[j][k * self.ny..(k + 1) * self.ny]
    }

    /// `sup ‖∫ D₊(x,ξ,·,η) dη‖_{L²}` over mesh nodes.
    pub fn bound(&self, c: &ContinuumParams, field: &KernelField) -> f64 {
        let mesh = field.mesh();
        let ys: Vec<f64> = field.ygrid().nodes().collect();
        let wy = field.ygrid().weights();
        let mut best: f64 = 0.0;
        for k in 0..mesh.len() {
            let xi = mesh.coords(k).1;
            let tbar: Vec<f64> = (0..self.m)
                .map(|j| ys.iter().zip(wy).map(|(&y, w)| c.theta(j, xi, y) * w).sum())
                .collect();
            let mut sq = 0.0;
            for iy in 0..self.ny {
                let v: f64 = (0..self.m).map(|j| self.gp[j][k * self.ny + iy] * tbar[j]).sum();
                sq += v * v * wy[iy];
            }
            best = best.max(sq.sqrt());
        }
        best
    }
}

/// Points where the region of `label(r)` changes between consecutive
/// abscissae, located by bisection on `region`.
fn crossings(count: usize, s_of: impl Fn(usize) -> f64, label: impl Fn(usize) -> u8, region: impl Fn(f64) -> u8, out: &mut Vec<f64>) {
    for r in 0..count {
        let p = label(r);
        if p == label(r + 1) {
            continue;
        }
        let (mut lo, mut hi) = (s_of(r), s_of(r + 1));
        for _ in 0..BISECT_STEPS {
            let mid = 0.5 * (lo + hi);
            if region(mid) == p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(hi);
    }
}

struct Seg {
    lo: f64,
    hi: f64,
    ilo: Option<usize>,
    ihi: Option<usize>,
}

/// Splits `[s_0, s_count]` at the grid points and at `cuts`.
fn segments(s_of: impl Fn(usize) -> f64, count: usize, cuts: &mut Vec<f64>) -> Vec<Seg> {
    let (first, last) = (s_of(0), s_of(count));
    cuts.retain(|&c| c > first && c < last);
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(count + cuts.len());
    let mut ci = 0;
    for r in 0..count {
        let (a, b) = (s_of(r), s_of(r + 1));
        let mut lo = (a, Some(r));
        while ci < cuts.len() && cuts[ci] < b {
            if cuts[ci] > lo.0 {
                out.push(Seg { lo: lo.0, hi: cuts[ci], ilo: lo.1, ihi: None });
                lo = (cuts[ci], None);
            }
            ci += 1;
        }
        out.push(Seg { lo: lo.0, hi: b, ilo: lo.1, ihi: Some(r + 1) });
    }
    out
}

struct Piece {
    w: f64,
    /// `[i * m + ℓ]` at both ends
    n_lo: SmallVec<[f64; 4]>,
    n_hi: SmallVec<[f64; 4]>,
    /// per column `j` of `G`
    g_lo: SmallVec<[RowStencil; 2]>,
    g_hi: SmallVec<[RowStencil; 2]>,
}

/// Solves for `G` on every mesh row by Picard iteration on a grid refined
/// `cfg.refine` times, splitting the quadrature at region boundaries so
/// that no jump is integrated across.
pub fn solve_d_minus(field: &KernelField, _c: &ContinuumParams, cfg: &DMinusConfig) -> Result<DMinus> {
    if field.kind() != KernelKind::Observer {
        return invalid("D₋ needs the observer kernels");
    }
    if cfg.refine == 0 {
        return invalid("quadrature refinement must be at least 1");
    }
    let mesh = field.mesh().clone();
    let (n, m) = (mesh.resolution(), field.m());
    let nf = cfg.refine * (n - 1) + 1;
    let hf = mesh.spacing() / cfg.refine as f64;
    let fx = |a: usize| if a + 1 == nf { 1.0 } else { a as f64 * hf };

    // N and region labels on the refined triangle
    let fam = |l: usize| Family::Observer(l);
    let fine_len = nf * (nf + 1) / 2;
    let mut flab = vec![vec![0u8; fine_len]; m];
    let mut nfine = vec![vec![0.0; fine_len]; m * m];
    for a in 0..nf {
        for b in 0..=a {
            let k = node_index(a, b);
            let (x, s) = (fx(a), fx(b));
            let on_mesh = a % cfg.refine == 0 && b % cfg.refine == 0;
            for l in 0..m {
                let p = if on_mesh {
                    mesh.region(fam(l), node_index(a / cfg.refine, b / cfg.refine))
                } else {
                    mesh.region_of(fam(l), x, s)
                };
                flab[l][k] = p;
                for i in 0..m {
                    nfine[i * m + l][k] = if on_mesh {
                        field.mat(i, l)[node_index(a / cfg.refine, b / cfg.refine)]
                    } else {
                        field.eval_mat_in(i, l, p, x, s)
                    };
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(n);
    let mut iterations = Vec::with_capacity(n);
    for b in 0..n {
        let beta = cfg.refine * b;
        let big_q = nf - 1 - beta;
        let xi = mesh.x(b);
        let labels: Vec<Vec<u8>> = (0..m)
            .map(|j| (0..=big_q).map(|r| flab[j][node_index(beta + r, beta)]).collect())
            .collect();
        let mut row = Row { xi, step: hf, vals: vec![0.0; (big_q + 1) * m * m], labels };
        let s_of = |r: usize| fx(beta + r);
        let mut row_cuts = Vec::new();
        for j in 0..m {
            crossings(big_q, s_of, |r| row.labels[j][r], |s| mesh.region_of(fam(j), s, xi), &mut row_cuts);
        }

        // quadrature pieces for every abscissa
        let mut pieces: Vec<Vec<Piece>> = Vec::with_capacity(big_q + 1);
        let mut forcing = vec![0.0; (big_q + 1) * m * m];
        for q in 0..=big_q {
            let alpha = beta + q;
            let x = fx(alpha);
            for ij in 0..m * m {
                forcing[q * m * m + ij] = -nfine[ij][node_index(alpha, beta)];
            }
            let mut cuts: Vec<f64> = row_cuts.iter().copied().filter(|&s| s < x).collect();
            for l in 0..m {
                crossings(
                    q,
                    s_of,
                    |r| flab[l][node_index(alpha, beta + r)],
                    |s| mesh.region_of(fam(l), x, s),
                    &mut cuts,
                );
            }
            let segs = if q == 0 { Vec::new() } else { segments(s_of, q, &mut cuts) };
            let mut list = Vec::with_capacity(segs.len());
            for sg in segs {
                let mid = 0.5 * (sg.lo + sg.hi);
                let mut piece = Piece {
                    w: 0.5 * (sg.hi - sg.lo),
                    n_lo: SmallVec::from_elem(0.0, m * m),
                    n_hi: SmallVec::from_elem(0.0, m * m),
                    g_lo: SmallVec::new(),
                    g_hi: SmallVec::new(),
                };
                for l in 0..m {
                    let lab = |r: usize| flab[l][node_index(alpha, beta + r)];
                    let p = match (sg.ilo, sg.ihi) {
                        (Some(r0), Some(r1)) if lab(r0) == lab(r1) => lab(r0),
                        _ => mesh.region_of(fam(l), x, mid),
                    };
                    for (end, s, slot) in [(sg.ilo, sg.lo, 0), (sg.ihi, sg.hi, 1)] {
                        for i in 0..m {
                            let v = match end {
                                Some(r) if lab(r) == p => nfine[i * m + l][node_index(alpha, beta + r)],
                                _ => field.eval_mat_in(i, l, p, x, s),
                            };
                            if slot == 0 {
                                piece.n_lo[i * m + l] = v;
                            } else {
                                piece.n_hi[i * m + l] = v;
                            }
                        }
                    }
                }
                for j in 0..m {
                    let lab = &row.labels[j];
                    let p = match (sg.ilo, sg.ihi) {
                        (Some(r0), Some(r1)) if lab[r0] == lab[r1] => lab[r0],
                        _ => mesh.region_of(fam(j), mid, xi),
                    };
                    piece.g_lo.push(row.stencil(j, p, sg.lo, sg.ilo));
                    piece.g_hi.push(row.stencil(j, p, sg.hi, sg.ihi));
                }
                list.push(piece);
            }
            pieces.push(list);
        }

        // Picard iteration from G = −N
        row.vals.copy_from_slice(&forcing);
        let mut next = forcing.clone();
        let mut converged = None;
        let mut history = Vec::new();
        for it in 1..=cfg.max_iter {
            for q in 0..=big_q {
                let out = &mut next[q * m * m..(q + 1) * m * m];
                out.copy_from_slice(&forcing[q * m * m..(q + 1) * m * m]);
                for pc in &pieces[q] {
                    for j in 0..m {
                        for l in 0..m {
                            let glo: f64 = pc.g_lo[j].iter().map(|&(r, w)| w * row.vals[r * m * m + l * m + j]).sum();
                            let ghi: f64 = pc.g_hi[j].iter().map(|&(r, w)| w * row.vals[r * m * m + l * m + j]).sum();
                            for i in 0..m {
                                out[i * m + j] -= pc.w * (pc.n_lo[i * m + l] * glo + pc.n_hi[i * m + l] * ghi);
                            }
                        }
                    }
                }
            }
            let scale = next.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            let diff = next.iter().zip(&row.vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            std::mem::swap(&mut row.vals, &mut next);
            history.push(diff);
            if !diff.is_finite() {
                break;
            }
            if diff <= cfg.tol * scale {
                converged = Some(it);
                break;
            }
        }
        let Some(it) = converged else {
            return Err(Error::SolverFailure {
                what: "D₋ Volterra iteration",
                iterations: history.len(),
                last: history.last().copied().unwrap_or(f64::NAN),
                history,
            });
        };
        iterations.push(it);
        rows.push(row);
    }
    Ok(DMinus { mesh, m, refine: cfg.refine, rows, iterations })
}

/// Evaluates `Gp` by quadrature over the mesh nodes of each column, split at
/// region boundaries.
pub fn solve_d_plus(field: &KernelField, dm: &DMinus, _c: &ContinuumParams) -> Result<DPlus> {
    if field.kind() != KernelKind::Observer {
        return invalid("D₊ needs the observer kernels");
    }
    if !Arc::ptr_eq(field.mesh(), &dm.mesh) && field.mesh().resolution() != dm.mesh.resolution() {
        return invalid("D₋ was computed on a different mesh");
    }
    let mesh = field.mesh();
    let (n, m, ny) = (mesh.resolution(), field.m(), field.ny());
    let fam = |l: usize| Family::Observer(l);
    let mut gp = vec![vec![0.0; mesh.len() * ny]; m];
    let mut acc = vec![0.0; m * ny];
    for b in 0..n {
        let row = &dm.rows[b];
        let xi = mesh.x(b);
        let mut row_cuts = Vec::new();
        for j in 0..m {
            crossings(row.len() - 1, |r| row.s(r).min(1.0), |r| row.labels[j][r], |s| mesh.region_of(fam(j), s, xi), &mut row_cuts);
        }
        for a in b..n {
            let k = node_index(a, b);
            let x = mesh.x(a);
            for j in 0..m {
                for iy in 0..ny {
                    acc[j * ny + iy] = -field.ydep_at(j, k)[iy];
                }
            }
            if a > b {
                let s_of = |c: usize| mesh.x(b + c);
                let mut cuts: Vec<f64> = row_cuts.iter().copied().filter(|&s| s < x).collect();
                for l in 0..m {
                    let labels = mesh.region_ids(fam(l));
                    crossings(a - b, s_of, |c| labels[node_index(a, b + c)], |s| mesh.region_of(fam(l), x, s), &mut cuts);
                }
                for sg in segments(s_of, a - b, &mut cuts) {
                    let mid = 0.5 * (sg.lo + sg.hi);
                    let w = 0.5 * (sg.hi - sg.lo);
                    for l in 0..m {
                        let labels = mesh.region_ids(fam(l));
                        let lab = |c: usize| labels[node_index(a, b + c)];
                        let p = match (sg.ilo, sg.ihi) {
                            (Some(c0), Some(c1)) if lab(c0) == lab(c1) => lab(c0),
                            _ => mesh.region_of(fam(l), x, mid),
                        };
                        let mvals = |end: Option<usize>, s: f64| -> Vec<f64> {
                            match end {
                                Some(cc) if lab(cc) == p => field.ydep_at(l, node_index(a, b + cc)).to_vec(),
                                _ => field.eval_ydep_in(l, p, x, s),
                            }
                        };
                        let (m_lo, m_hi) = (mvals(sg.ilo, sg.lo), mvals(sg.ihi, sg.hi));
                        for j in 0..m {
                            let rl = &row.labels[j];
                            let pj = match (sg.ilo, sg.ihi) {
                                (Some(c0), Some(c1)) if rl[dm.refine * c0] == rl[dm.refine * c1] => rl[dm.refine * c0],
                                _ => mesh.region_of(fam(j), mid, xi),
                            };
                            let g_at = |end: Option<usize>, s: f64| -> f64 {
                                row.stencil(j, pj, s, end.map(|cc| dm.refine * cc))
                                    .iter()
                                    .map(|&(r, wt)| wt * row.vals[r * m * m + l * m + j])
                                    .sum()
                            };
                            let (g_lo, g_hi) = (g_at(sg.ilo, sg.lo), g_at(sg.ihi, sg.hi));
                            for iy in 0..ny {
                                acc[j * ny + iy] -= w * (m_lo[iy] * g_lo + m_hi[iy] * g_hi);
                            }
                        }
                    }
                }
            }
            for j in 0..m {
                gp[j][k * ny..(k + 1) * ny].copy_from_slice(&acc[j * ny..(j + 1) * ny]);
            }
        }
    }
    Ok(DPlus { ny, m, gp })
}

/// Strictly upper triangular boundary coupling of the target system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HMatrix {
    pub m: usize,
    /// Mesh abscissae `ξ`.
    pub xi: Vec<f64>,
    /// `[i * m + j][b]`, zero for `i ≥ j`.
    pub values: Vec<Vec<f64>>,
}

impl HMatrix {
    pub fn sup(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |s, v| s.max(v.abs()))
    }
}

pub fn compute_h(field: &KernelField, c: &ContinuumParams) -> HMatrix {
    let mesh = field.mesh();
    let (n, m, ny) = (mesh.resolution(), field.m(), field.ny());
    let ys: Vec<f64> = field.ygrid().nodes().collect();
    let wy = field.ygrid().weights();
    let mut values = vec![vec![0.0; n]; m * m];
    for i in 0..m {
        for j in i + 1..m {
            for b in 0..n {
                let k = node_index(n - 1, b);
                let mj = field.ydep_at(j, k);
                let integ: f64 = (0..ny).map(|l| c.r(i, ys[l]) * mj[l] * wy[l]).sum();
                values[i * m + j][b] = field.mat(i, j)[k] - integ;
            }
        }
    }
    HMatrix { m, xi: (0..n).map(|b| mesh.x(b)).collect(), values }
}

/// Bound constants entering the Lyapunov estimate for the error target
/// system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovData {
    pub m: usize,
    pub m_lambda: f64,
    pub m_mu: f64,
    pub m_sigma: f64,
    pub m_theta: f64,
    pub m_dplus: f64,
    pub m_dminus: f64,
    pub m_h: f64,
    pub m_r: f64,
}

impl LyapunovData {
    /// Parameter bounds sampled on the mesh abscissae and the y-grid of
    /// `field`, with the kernel-dependent bounds supplied.
    pub fn from_parts(c: &ContinuumParams, field: &KernelField, dm: &DMinus, dp: &DPlus, h: &HMatrix) -> Self {
        let mesh = field.mesh();
        let n = mesh.resolution();
        let m = c.m();
        let ys: Vec<f64> = field.ygrid().nodes().collect();
        let wy = field.ygrid().weights();
        let l2 = |f: &dyn Fn(f64) -> f64| ys.iter().zip(wy).map(|(&y, w)| f(y).powi(2) * w).sum::<f64>().sqrt();
        let xs: Vec<f64> = (0..n).map(|a| mesh.x(a)).collect();
        let mut m_lambda = f64::INFINITY;
        let mut m_mu = f64::INFINITY;
        let mut m_sigma: f64 = 0.0;
        let mut m_theta: f64 = 0.0;
        for &x in &xs {
            for &y in &ys {
                m_lambda = m_lambda.min(c.lambda(x, y));
            }
            for j in 0..m {
                m_mu = m_mu.min(c.mu(j, x));
                m_theta = m_theta.max(l2(&|y| c.theta(j, x, y)));
            }
            m_sigma = m_sigma.max(l2(&|y| ys.iter().zip(wy).map(|(&e, w)| c.sigma(x, y, e) * w).sum()));
        }
        let m_r = (0..m).map(|j| l2(&|y| c.r(j, y))).fold(0.0, f64::max);
        Self {
            m,
            m_lambda,
            m_mu,
            m_sigma,
            m_theta,
            m_dplus: dp.bound(c, field),
            m_dminus: dm.bound(c, field),
            m_h: h.sup(),
            m_r,
        }
    }

    /// Lower bound on `δ` below which the estimate is not negative.
    pub fn delta_threshold(&self) -> f64 {
        let a = 2.0 * (self.m_sigma + self.m_dplus) / self.m_lambda;
        let b = (self.m_theta.powi(2) + self.m_dminus.powi(2)) / (2.0 * self.m_r.powi(2) * self.m_mu.powi(2));
        (a + b).max(3.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovWeights {
    pub delta: f64,
    pub threshold: f64,
    pub b: Vec<f64>,
    pub m_b: f64,
    /// `e^{−2δ} / (2 m M_R²)`
    pub bound: f64,
    pub feasible: bool,
    /// Indices whose recursive weight fell below the previous one and was
    /// raised to it.
    pub raised: Vec<usize>,
}

/// `δ = 1.05 ×` threshold, `B_1` closed form, `B_j` by recursion, kept
/// non-decreasing and rescaled into the bound if needed.
pub fn lyapunov_weights(data: &LyapunovData) -> Result<LyapunovWeights> {
    let m = data.m;
    if m == 0 {
        return invalid("need at least one leftward channel");
    }
    if !(data.m_r > 0.0) {
        return invalid("weights undefined for R ≡ 0 (M_R = 0)");
    }
    let threshold = data.delta_threshold();
    Ok(weights_for_delta(data, 1.05 * threshold, threshold))
}

/// As [`lyapunov_weights`] with a prescribed `δ`.
pub fn weights_for_delta(data: &LyapunovData, delta: f64, threshold: f64) -> LyapunovWeights {
    let m = data.m;
    let bound = (-2.0 * delta).exp() / (2.0 * m as f64 * data.m_r.powi(2));
    let g = 2.0 * delta.exp() * data.m_h.powi(2);
    // Σ_{ℓ=1}^m g^{ℓ−1} (m−1)!/(m−ℓ)!
    let mut sum = 0.0;
    let mut term = 1.0;
    for l in 1..=m {
        sum += term;
        term *= g * (m - l) as f64;
    }
    let mut b = vec![bound / sum];
    let mut raised = Vec::new();
    for j in 2..=m {
        let s: f64 = (1..j).map(|l| (m - l) as f64 * b[l - 1]).sum();
        let mut bj = g * s;
        // the recursion is a lower bound; a weak coupling H would otherwise
        // leave B_j near zero and V blind to β̃_j
        if bj < b[j - 2] {
            bj = b[j - 2];
            raised.push(j - 1);
        }
        b.push(bj);
    }
    let mut m_b = b.iter().copied().fold(0.0, f64::max);
    if m_b > bound {
        let scale = bound / m_b;
        b.iter_mut().for_each(|v| *v *= scale);
        m_b = bound;
    }
    LyapunovWeights {
        delta,
        threshold,
        feasible: m_b <= bound * (1.0 + 1e-12),
        b,
        m_b,
        bound,
        raised,
    }
}
