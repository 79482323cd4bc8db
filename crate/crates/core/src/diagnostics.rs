//! Post-processing of simulation traces: stability verdicts, the observer
//! Lyapunov functional and the separation comparison.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::{KernelField, KernelKind, LyapunovWeights};
use crate::model::ContinuumParams;
use crate::numerics::XGrid;
use crate::sim::{GridState, SimTrace};

pub const DEFAULT_BURN_IN: f64 = 0.2;
const SLOPE_THRESHOLD: f64 = 1e-3;
const MIN_FIT_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    /// Slope of `log ‖z‖_E` after burn-in, `−∞` for an identically zero trace.
    pub rate: f64,
    /// RMS deviation of `log ‖z‖_E` from the fitted line.
    pub residual: f64,
    pub horizon: f64,
    pub diverged: bool,
}

/// Least-squares line through `(t, log y)` for the positive `y`.
/// Returns slope, intercept and RMS residual.
pub fn log_linear_fit(t: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&a, &b)| (a, b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mt;
    let rss: f64 = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    Some((slope, icpt, (rss / k).sqrt()))
}

/// Classifies the plant norm `‖z‖_E` of a trace. The overshoot guard
/// compares the post-burn-in maximum with the first post-burn-in sample.
pub fn classify(trace: &SimTrace, burn_in: f64) -> Result<StabilityVerdict> {
    classify_series(&trace.times, &trace.e_norms, burn_in, trace.diverged_at)
}

pub fn classify_series(
    times: &[f64],
    norms: &[f64],
    burn_in: f64,
    diverged_at: Option<f64>,
) -> Result<StabilityVerdict> {
    if !(0.0..1.0).contains(&burn_in) {
        return invalid(format!("burn-in fraction must lie in [0, 1), got {burn_in}"));
    }
    if times.len() != norms.len() {
        return invalid("times and norms differ in length");
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    if let Some(t) = diverged_at {
        return Ok(StabilityVerdict {
            verdict: Verdict::Unstable,
            rate: f64::INFINITY,
            residual: f64::NAN,
            horizon: t,
            diverged: true,
        });
    }
    let start = times.iter().position(|&t| t >= burn_in * horizon).unwrap_or(times.len());
    let (t, y) = (&times[start..], &norms[start..]);
    if t.len() < MIN_FIT_SAMPLES {
        return invalid(format!(
            "{} samples after burn-in, at least {MIN_FIT_SAMPLES} needed",
            t.len()
        ));
    }
    if norms.iter().all(|&v| v == 0.0) {
        return Ok(StabilityVerdict {
            verdict: Verdict::Stable,
            rate: f64::NEG_INFINITY,
            residual: 0.0,
            horizon,
            diverged: false,
        });
    }
    let Some((rate, _, residual)) = log_linear_fit(t, y) else {
        // the norm vanished exactly right after burn-in
        return Ok(StabilityVerdict {
            verdict: Verdict::Stable,
            rate: f64::NEG_INFINITY,
            residual: 0.0,
            horizon,
            diverged: false,
        });
    };
    let peak = y.iter().copied().fold(0.0, f64::max);
    let verdict = if rate < -SLOPE_THRESHOLD && peak < 10.0 * y[0] {
        Verdict::Stable
    } else if rate > SLOPE_THRESHOLD {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    };
    Ok(StabilityVerdict { verdict, rate, residual, horizon, diverged: false })
}

/// Observer kernels and Lyapunov weights tabulated on a simulation grid for
/// an error state with `cells` rows.
#[derive(Debug, Clone)]
pub struct LyapunovEvaluator {
    cells: usize,
    m: usize,
    grid: XGrid,
    delta: f64,
    b: Vec<f64>,
    /// `[a][b][c * m + j]`, cell means of `M_j(x_a, x_b, ·)`, zero for `b > a`.
    mk: Vec<f64>,
    /// `[a][b][i * m + j]`
    nk: Vec<f64>,
    inv_lambda: Vec<f64>,
    inv_mu: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl LyapunovEvaluator {
    pub fn new(
        field: &KernelField,
        weights: &LyapunovWeights,
        c: &ContinuumParams,
        cells: usize,
        grid: &XGrid,
    ) -> Result<Self> {
        if field.kind() != KernelKind::Observer {
            return invalid("the Lyapunov functional needs observer kernels");
        }
        let m = c.m();
        if field.m() != m || weights.b.len() != m {
            return invalid("kernels, weights and parameters disagree on m");
        }
        if cells == 0 {
            return invalid("error state needs at least one row");
        }
        let nx = grid.len();
        let xs: Vec<f64> = grid.nodes().collect();
        let mut mk = vec![0.0; nx * nx * cells * m];
        let mut nk = vec![0.0; nx * nx * m * m];
        for a in 0..nx {
            for b in 0..=a {
                let base = (a * nx + b) * cells * m;
                for j in 0..m {
                    let means = field.ygrid().cell_means(&field.eval_ydep(j, xs[a], xs[b]), cells)?;
                    for (cell, v) in means.into_iter().enumerate() {
                        mk[base + cell * m + j] = v;
                    }
                    for i in 0..m {
                        nk[(a * nx + b) * m * m + i * m + j] = field.eval_mat(i, j, xs[a], xs[b]);
                    }
                }
            }
        }
        let mut inv_lambda = vec![0.0; cells * nx];
        for cell in 0..cells {
            let y = (cell as f64 + 0.5) / cells as f64;
            for (k, &x) in xs.iter().enumerate() {
                inv_lambda[cell * nx + k] = 1.0 / c.lambda(x, y);
            }
        }
        let mut inv_mu = vec![0.0; m * nx];
        for j in 0..m {
            for (k, &x) in xs.iter().enumerate() {
                inv_mu[j * nx + k] = 1.0 / c.mu(j, x);
            }
        }
        Ok(Self {
            cells,
            m,
            grid: *grid,
            delta: weights.delta,
            b: weights.b.clone(),
            mk,
            nk,
            inv_lambda,
            inv_mu,
            tol: 1e-12,
            max_iter: 200,
        })
    }

    /// `(α̃, β̃)` from `(ũ, ṽ)`: `β̃` by Picard iteration on
    /// `ṽ = β̃ + ∫ N β̃`, then `α̃ = ũ − ∫ M β̃`.
    pub fn target_state(&self, e: &GridState) -> Result<GridState> {
        let (m, nx, cells) = (self.m, self.grid.len(), self.cells);
        if e.n != cells || e.m != m || e.nx != nx {
            return invalid(format!(
                "error state is {}+{} on {}, evaluator expects {cells}+{m} on {nx}",
                e.n, e.m, e.nx
            ));
        }
        let integral = |beta: &[f64], a: usize, i: usize| -> f64 {
            let h = self.grid.spacing();
            let mut acc = 0.0;
            for b in 0..=a {
                let w = if b == 0 || b == a { 0.5 * h } else { h };
                let row = &self.nk[(a * nx + b) * m * m + i * m..(a * nx + b) * m * m + (i + 1) * m];
                let mut s = 0.0;
                for j in 0..m {
                    s += row[j] * beta[j * nx + b];
                }
                acc += w * s;
            }
            if a == 0 {
                0.0
            } else {
                acc
            }
        };
        let mut beta = e.v.clone();
        let scale = e.v.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut converged = false;
        for _ in 0..self.max_iter {
            let mut next = vec![0.0; m * nx];
            for a in 0..nx {
                for i in 0..m {
                    next[i * nx + a] = e.v[i * nx + a] - integral(&beta, a, i);
                }
            }
            let diff = next.iter().zip(&beta).fold(0.0f64, |s, (p, q)| s.max((p - q).abs()));
            beta = next;
            if diff <= self.tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(crate::Error::SolverFailure {
                what: "observer target inversion",
                iterations: self.max_iter,
                last: f64::NAN,
                history: Vec::new(),
            });
        }
        let mut out = e.clone();
        out.v.copy_from_slice(&beta);
        let h = self.grid.spacing();
        for a in 1..nx {
            for cell in 0..cells {
                let mut acc = 0.0;
                for b in 0..=a {
                    let w = if b == 0 || b == a { 0.5 * h } else { h };
                    let base = (a * nx + b) * cells * m + cell * m;
                    let mut s = 0.0;
                    for j in 0..m {
                        s += self.mk[base + j] * beta[j * nx + b];
                    }
                    acc += w * s;
                }
                out.u[cell * nx + a] -= acc;
            }
        }
        Ok(out)
    }

    /// `V = ∫∫ e^{−δx} α̃²/λ + ∫ e^{δx} β̃ᵀ B Λ₋⁻¹ β̃`, the y-integral as a
    /// `1/cells` sum.
    pub fn value(&self, e: &GridState) -> Result<f64> {
        let t = self.target_state(e)?;
        let (m, nx, cells) = (self.m, self.grid.len(), self.cells);
        let mut v = 0.0;
        for (k, x) in self.grid.nodes().enumerate() {
            let mut a2 = 0.0;
            for cell in 0..cells {
                let a = t.u[cell * nx + k];
                a2 += a * a * self.inv_lambda[cell * nx + k];
            }
            let mut b2 = 0.0;
            for j in 0..m {
                let b = t.v[j * nx + k];
                b2 += self.b[j] * b * b * self.inv_mu[j * nx + k];
            }
            v += self.grid.weight(k) * ((-self.delta * x).exp() * a2 / cells as f64 + (self.delta * x).exp() * b2);
        }
        Ok(v)
    }
}

/// `V(t)` along recorded estimation-error states. A failed inversion
/// leaves `None` at that sample.
pub fn lyapunov_trace(states: &[GridState], eval: &LyapunovEvaluator) -> Vec<Option<f64>> {
    states.iter().map(|s| eval.value(s).ok()).collect()
}

/// Whether `values` never exceed `1 + tol` times their running minimum
/// from the first sample at or after `after`.
pub fn non_increasing_after(times: &[f64], values: &[f64], after: f64, tol: f64) -> bool {
    let mut low = f64::INFINITY;
    for (&t, &v) in times.iter().zip(values) {
        if t < after {
            continue;
        }
        if v > (1.0 + tol) * low {
            return false;
        }
        low = low.min(v);
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationReport {
    pub comparable: bool,
    /// First time the estimation error is below 1% of its initial norm.
    pub cutoff: Option<f64>,
    pub rate_state: f64,
    pub rate_output: f64,
    /// `rate_output / rate_state`
    pub ratio: f64,
    pub control_sup_diff: f64,
}

/// Compares a state-feedback trace with an output-feedback trace of the
/// same plant and initial data.
pub fn compare_separation(state_fb: &SimTrace, output_fb: &SimTrace) -> SeparationReport {
    let mut rep = SeparationReport {
        comparable: false,
        cutoff: None,
        rate_state: f64::NAN,
        rate_output: f64::NAN,
        ratio: f64::NAN,
        control_sup_diff: f64::NAN,
    };
    if state_fb.diverged_at.is_some() || output_fb.diverged_at.is_some() {
        return rep;
    }
    let err = &output_fb.error_norms;
    let e0 = err.first().copied().unwrap_or(0.0);
    let cut = if e0 == 0.0 {
        Some(0)
    } else {
        err.iter().position(|&e| e < 0.01 * e0)
    };
    let Some(cut) = cut else {
        return rep;
    };
    let t_cut = output_fb.times[cut];
    rep.cutoff = Some(t_cut);
    let tail = |tr: &SimTrace| {
        let s = tr.times.iter().position(|&t| t >= t_cut).unwrap_or(tr.times.len());
        (s, log_linear_fit(&tr.times[s..], &tr.e_norms[s..]))
    };
    let (ss, fs) = tail(state_fb);
    let (so, fo) = tail(output_fb);
    let mut sup = 0.0f64;
    for (a, b) in state_fb.controls[ss..].iter().zip(&output_fb.controls[so..]) {
        for (p, q) in a.iter().zip(b) {
            sup = sup.max((p - q).abs());
        }
    }
    rep.control_sup_diff = sup;
    if let (Some(fs), Some(fo)) = (fs, fo) {
        rep.rate_state = fs.0;
        rep.rate_output = fo.0;
        rep.ratio = fo.0 / fs.0;
        rep.comparable = fs.0 < -SLOPE_THRESHOLD && fo.0 < -SLOPE_THRESHOLD;
    } else if output_fb.controls == state_fb.controls {
        rep.comparable = true;
        rep.ratio = 1.0;
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRow {
    pub scenario: String,
    pub n: usize,
    pub verdict: Verdict,
    pub rate: f64,
    pub residual: f64,
}

pub fn write_verdicts(rows: &[VerdictRow], w: impl Write, delimiter: u8) -> Result<()> {
    let mut out = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
    out.write_record(["scenario", "n", "verdict", "rate", "residual"])?;
    for r in rows {
        out.write_record(&[
            r.scenario.clone(),
            r.n.to_string(),
            r.verdict.to_string(),
            format!("{:.6e}", r.rate),
            format!("{:.6e}", r.residual),
        ])?;
    }
    out.flush()?;
    Ok(())
}
