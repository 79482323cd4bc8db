//! Explicit upwind time stepping for `n+m` hyperbolic systems, their
//! Luenberger-type observers and the closed loop.

use std::io::Write;

use crate::control::OutputLaw;
use crate::error::{invalid, Error, Result};
use crate::kernels::GainSet;
use crate::model::{ContinuumParams, PlantParams};
use crate::numerics::{e_norm_sq_unchecked, XGrid};

/// Samples of `u` (`n` rows) and `v` (`m` rows) on an x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub n: usize,
    pub m: usize,
    pub nx: usize,
    /// `[i * nx + k]`
    pub u: Vec<f64>,
    /// `[j * nx + k]`
    pub v: Vec<f64>,
    pub time: f64,
}

impl GridState {
    pub fn zeros(n: usize, m: usize, nx: usize) -> Self {
        Self { n, m, nx, u: vec![0.0; n * nx], v: vec![0.0; m * nx], time: 0.0 }
    }

    pub fn from_fn(
        n: usize,
        m: usize,
        grid: &XGrid,
        fu: impl Fn(usize, f64) -> f64,
        fv: impl Fn(usize, f64) -> f64,
    ) -> Self {
        let nx = grid.len();
        let mut s = Self::zeros(n, m, nx);
        for (k, x) in grid.nodes().enumerate() {
            for i in 0..n {
                s.u[i * nx + k] = fu(i, x);
            }
            for j in 0..m {
                s.v[j * nx + k] = fv(j, x);
            }
        }
        s
    }

    pub fn u_row(&self, i: usize) -> &[f64] {
        &self.u[i * self.nx..(i + 1) * self.nx]
    }

    pub fn v_row(&self, j: usize) -> &[f64] {
        &self.v[j * self.nx..(j + 1) * self.nx]
    }

    /// `Y = v(·, 0)`.
    pub fn output(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.v[j * self.nx]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn e_norm(&self, grid: &XGrid) -> f64 {
        e_norm_sq_unchecked(&self.u, &self.v, self.n, grid).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut s = self.clone();
        s.u.iter_mut().chain(s.v.iter_mut()).for_each(|x| *x *= a);
        s
    }

    /// `self − other`, shapes permitting.
    pub fn minus(&self, other: &GridState) -> Result<Self> {
        if self.n != other.n || self.m != other.m || self.nx != other.nx {
            return invalid(format!(
                "cannot subtract a {}+{} state from a {}+{} state",
                other.n, other.m, self.n, self.m
            ));
        }
        let mut s = self.clone();
        s.u.iter_mut().zip(&other.u).for_each(|(a, b)| *a -= b);
        s.v.iter_mut().zip(&other.v).for_each(|(a, b)| *a -= b);
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub nx: usize,
    pub cfl: f64,
    pub horizon: f64,
    pub record_stride: usize,
    /// Keep the estimation-error state at every recorded sample.
    pub keep_error_states: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { nx: 128, cfl: 0.9, horizon: 30.0, record_stride: 10, keep_error_states: false }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 {
            return invalid(format!("need at least 3 grid points, got {}", self.nx));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return invalid(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.record_stride == 0 {
            return invalid("record_stride must be at least 1");
        }
        Ok(())
    }
}

/// Coefficients of an `n+m` system tabulated on an x-grid, with the `1/n`
/// weights of the in-domain and boundary sums folded into `weight`.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    n: usize,
    m: usize,
    grid: XGrid,
    weight: f64,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    /// `[k][i * n + l]`, `None` if identically zero.
    sigma: Option<Vec<f64>>,
    /// `[k][i * m + j]`
    w: Vec<f64>,
    /// `[k][j * n + i]`
    theta: Vec<f64>,
    /// `[k][i * m + j]`
    psi: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
}

impl DiscreteSystem {
    pub fn from_plant(p: &PlantParams, grid: &XGrid) -> Self {
        let (n, m) = (p.n(), p.m());
        Self::tabulate(
            n,
            m,
            grid,
            |i, x| p.lambda(i, x),
            |j, x| p.mu(j, x),
            |i, l, x| p.sigma(i, l, x),
            |i, j, x| p.w(i, j, x),
            |j, i, x| p.theta(j, i, x),
            |i, j, x| p.psi(i, j, x),
            |i, j| p.q(i, j),
            |j, i| p.r(j, i),
        )
    }

    /// The continuum system with its ensemble variable sampled at the
    /// nodes `y = i/n_hat`, `i = 1..n_hat`.
    pub fn from_continuum(c: &ContinuumParams, n_hat: usize, grid: &XGrid) -> Result<Self> {
        if n_hat == 0 {
            return invalid("the ensemble discretization needs at least one row");
        }
        let y = |i: usize| (i + 1) as f64 / n_hat as f64;
        Ok(Self::tabulate(
            n_hat,
            c.m(),
            grid,
            |i, x| c.lambda(x, y(i)),
            |j, x| c.mu(j, x),
            |i, l, x| c.sigma(x, y(i), y(l)),
            |i, j, x| c.w(j, x, y(i)),
            |j, i, x| c.theta(j, x, y(i)),
            |i, j, x| c.psi(i, j, x),
            |i, j| c.q(j, y(i)),
            |j, i| c.r(j, y(i)),
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn tabulate(
        n: usize,
        m: usize,
        grid: &XGrid,
        lambda: impl Fn(usize, f64) -> f64,
        mu: impl Fn(usize, f64) -> f64,
        sigma: impl Fn(usize, usize, f64) -> f64,
        w: impl Fn(usize, usize, f64) -> f64,
        theta: impl Fn(usize, usize, f64) -> f64,
        psi: impl Fn(usize, usize, f64) -> f64,
        q: impl Fn(usize, usize) -> f64,
        r: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let nx = grid.len();
        let xs: Vec<f64> = grid.nodes().collect();
        let mut s = Self {
            n,
            m,
            grid: *grid,
            weight: 1.0 / n as f64,
            lambda: vec![0.0; n * nx],
            mu: vec![0.0; m * nx],
            sigma: None,
            w: vec![0.0; nx * n * m],
            theta: vec![0.0; nx * m * n],
            psi: vec![0.0; nx * m * m],
            q: vec![0.0; n * m],
            r: vec![0.0; m * n],
        };
        let mut sig = vec![0.0; nx * n * n];
        for (k, &x) in xs.iter().enumerate() {
            for i in 0..n {
                s.lambda[i * nx + k] = lambda(i, x);
                for l in 0..n {
                    sig[k * n * n + i * n + l] = sigma(i, l, x);
                }
                for j in 0..m {
                    s.w[k * n * m + i * m + j] = w(i, j, x);
                    s.theta[k * m * n + j * n + i] = theta(j, i, x);
                }
            }
            for j in 0..m {
                s.mu[j * nx + k] = mu(j, x);
                for l in 0..m {
                    s.psi[k * m * m + j * m + l] = psi(j, l, x);
                }
            }
        }
        if sig.iter().any(|&v| v != 0.0) {
            s.sigma = Some(sig);
        }
        for i in 0..n {
            for j in 0..m {
                s.q[i * m + j] = q(i, j);
                s.r[j * n + i] = r(j, i);
            }
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &XGrid {
        &self.grid
    }

    /// `R` sampled as `[j * n + i]`, without the `1/n` weight.
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn max_speed(&self) -> f64 {
        self.lambda
            .iter()
            .chain(&self.mu)
            .map(|s| s.abs())
            .fold(0.0, f64::max)
    }

    fn check_state(&self, s: &GridState) -> Result<()> {
        if s.n != self.n || s.m != self.m || s.nx != self.grid.len() {
            return invalid(format!(
                "state is {}+{} on {} points, system is {}+{} on {}",
                s.n,
                s.m,
                s.nx,
                self.n,
                self.m,
                self.grid.len()
            ));
        }
        Ok(())
    }

    fn min_speed(&self) -> f64 {
        self.lambda.iter().chain(&self.mu).copied().fold(f64::INFINITY, f64::min)
    }

    /// Interior update shared by plant and observer. `inject` is
    /// `v̂(0) − y` for an observer.
    fn interior(&self, s: &GridState, dt: f64, inject: Option<(&GainSet, &[f64])>) -> (Vec<f64>, Vec<f64>) {
        let (n, m, nx) = (self.n, self.m, self.grid.len());
        let r = dt / self.grid.spacing();
        let mut u = s.u.clone();
        let mut v = s.v.clone();
        let mut col = vec![0.0; n];
        let mut vcol = vec![0.0; m];
        for k in 0..nx {
            for i in 0..n {
                col[i] = s.u[i * nx + k];
            }
            for j in 0..m {
                vcol[j] = s.v[j * nx + k];
            }
            let w = &self.w[k * n * m..(k + 1) * n * m];
            let th = &self.theta[k * m * n..(k + 1) * m * n];
            let ps = &self.psi[k * m * m..(k + 1) * m * m];
            if k > 0 {
                for i in 0..n {
                    let mut src = 0.0;
                    if let Some(sig) = &self.sigma {
                        let row = &sig[k * n * n + i * n..k * n * n + (i + 1) * n];
                        src += self.weight * row.iter().zip(&col).map(|(a, b)| a * b).sum::<f64>();
                    }
                    src += w[i * m..(i + 1) * m].iter().zip(&vcol).map(|(a, b)| a * b).sum::<f64>();
                    if let Some((g, e)) = inject {
                        let p = &g.p_plus[k][i * m..(i + 1) * m];
                        src -= p.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
                    }
                    let idx = i * nx + k;
                    u[idx] = s.u[idx] - r * self.lambda[idx] * (s.u[idx] - s.u[idx - 1]) + dt * src;
                }
            }
            if k + 1 < nx {
                for j in 0..m {
                    let mut src = self.weight
                        * th[j * n..(j + 1) * n].iter().zip(&col).map(|(a, b)| a * b).sum::<f64>();
                    src += ps[j * m..(j + 1) * m].iter().zip(&vcol).map(|(a, b)| a * b).sum::<f64>();
                    if let Some((g, e)) = inject {
                        let p = &g.p_minus[k][j * m..(j + 1) * m];
                        src -= p.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
                    }
                    let idx = j * nx + k;
                    v[idx] = s.v[idx] + r * self.mu[idx] * (s.v[idx + 1] - s.v[idx]) + dt * src;
                }
            }
        }
        (u, v)
    }

    /// `R u(·, 1)/n` for the state's current `u`.
    pub fn boundary_term(&self, s: &GridState) -> Vec<f64> {
        let (n, nx) = (self.n, self.grid.len());
        (0..self.m)
            .map(|j| self.weight * (0..n).map(|i| self.r[j * n + i] * s.u[i * nx + nx - 1]).sum::<f64>())
            .collect()
    }

    fn left_boundary(&self, u: &mut [f64], trace: &[f64]) {
        let (m, nx) = (self.m, self.grid.len());
        for i in 0..self.n {
            u[i * nx] = (0..m).map(|j| self.q[i * m + j] * trace[j]).sum();
        }
    }
}

/// Time step for explicit upwinding: `cfl · Δx / max speed`.
pub fn cfl_dt(sys: &DiscreteSystem, cfl: f64) -> Result<f64> {
    if sys.min_speed() <= 0.0 {
        return invalid("transport speeds must be positive");
    }
    let s = sys.max_speed();
    if s == 0.0 || !s.is_finite() {
        return invalid("maximum transport speed is zero or not finite");
    }
    Ok(cfl * sys.grid.spacing() / s)
}

fn diverged(time: f64) -> Error {
    Error::Divergence { time, trace: Box::default() }
}

/// Interior update and `u(t, 0) = Q v(t, 0)`, leaving `v(t, 1)` to
/// [`close_right`].
pub fn advance_plant(s: &GridState, sys: &DiscreteSystem, dt: f64) -> Result<GridState> {
    sys.check_state(s)?;
    let (mut u, v) = sys.interior(s, dt, None);
    let nx = sys.grid.len();
    let trace: Vec<f64> = (0..sys.m).map(|j| v[j * nx]).collect();
    sys.left_boundary(&mut u, &trace);
    Ok(GridState { u, v, time: s.time + dt, ..*s })
}

/// Observer counterpart of [`advance_plant`]. `y_meas` is the measurement
/// at the current time level and drives the injection terms; `y_next` is
/// the measurement at the new level and sets `û(t, 0) = Q y`.
pub fn advance_observer(
    s: &GridState,
    sys: &DiscreteSystem,
    gains: &GainSet,
    y_meas: &[f64],
    y_next: &[f64],
    dt: f64,
) -> Result<GridState> {
    sys.check_state(s)?;
    let m = sys.m;
    if gains.n != sys.n || gains.m != m || gains.grid.len() != sys.grid.len() {
        return invalid(format!(
            "gains are {}+{} on {} points, observer is {}+{} on {}",
            gains.n,
            gains.m,
            gains.grid.len(),
            sys.n,
            m,
            sys.grid.len()
        ));
    }
    if y_meas.len() != m || y_next.len() != m {
        return invalid(format!("measurements need {m} entries"));
    }
    let nx = sys.grid.len();
    let e: Vec<f64> = (0..m).map(|j| s.v[j * nx] - y_meas[j]).collect();
    let (mut u, v) = sys.interior(s, dt, Some((gains, &e)));
    sys.left_boundary(&mut u, y_next);
    Ok(GridState { u, v, time: s.time + dt, ..*s })
}

/// Sets `v(t, 1) = R u(t, 1)/n + U` and checks the result is finite.
pub fn close_right(s: &mut GridState, sys: &DiscreteSystem, control: &[f64]) -> Result<()> {
    if control.len() != sys.m {
        return invalid(format!("control has {} entries, m = {}", control.len(), sys.m));
    }
    let b = sys.boundary_term(s);
    let nx = sys.grid.len();
    for j in 0..sys.m {
        s.v[j * nx + nx - 1] = b[j] + control[j];
    }
    if !s.is_finite() {
        return Err(diverged(s.time));
    }
    Ok(())
}

/// One explicit Euler step of the plant with control `U`.
pub fn step_plant(s: &GridState, sys: &DiscreteSystem, control: &[f64], dt: f64) -> Result<GridState> {
    let mut out = advance_plant(s, sys, dt)?;
    close_right(&mut out, sys, control)?;
    Ok(out)
}

/// One step of the observer with output injection and a given `U`.
pub fn step_observer(
    s: &GridState,
    sys: &DiscreteSystem,
    gains: &GainSet,
    y_meas: &[f64],
    y_next: &[f64],
    control: &[f64],
    dt: f64,
) -> Result<GridState> {
    let mut out = advance_observer(s, sys, gains, y_meas, y_next, dt)?;
    close_right(&mut out, sys, control)?;
    Ok(out)
}

/// Observer with the same row count as the plant, built from `n+m` data.
pub fn step_observer_nm(
    s: &GridState,
    sys: &DiscreteSystem,
    gains: &GainSet,
    y_meas: &[f64],
    y_next: &[f64],
    control: &[f64],
    dt: f64,
) -> Result<GridState> {
    step_observer(s, sys, gains, y_meas, y_next, control, dt)
}

/// Continuum observer realized on `n̂` rows, see
/// [`DiscreteSystem::from_continuum`]. Gains are tabulated on `n̂` cells.
pub fn step_observer_continuum(
    s: &GridState,
    sys: &DiscreteSystem,
    gains: &GainSet,
    y_meas: &[f64],
    y_next: &[f64],
    control: &[f64],
    dt: f64,
) -> Result<GridState> {
    step_observer(s, sys, gains, y_meas, y_next, control, dt)
}

#[derive(Debug, Clone)]
pub struct Observer {
    pub system: DiscreteSystem,
    pub gains: GainSet,
    pub init: GridState,
}

/// Which state the control law reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    Plant,
    Observer,
}

/// Plant, optional observer and optional control law.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: DiscreteSystem,
    pub init: GridState,
    pub observer: Option<Observer>,
    pub law: Option<(OutputLaw, Feedback)>,
}

impl Scenario {
    fn check(&self) -> Result<()> {
        self.plant.check_state(&self.init)?;
        let nx = self.plant.grid.len();
        if let Some(o) = &self.observer {
            o.system.check_state(&o.init)?;
            if o.system.m != self.plant.m || o.system.grid.len() != nx {
                return invalid("observer and plant disagree on m or the grid");
            }
        }
        if let Some((law, fb)) = &self.law {
            let rows = match fb {
                Feedback::Plant => self.plant.n,
                Feedback::Observer => match &self.observer {
                    Some(o) => o.system.n,
                    None => return invalid("observer feedback without an observer"),
                },
            };
            if law.cells() != rows || law.m() != self.plant.m {
                return invalid(format!(
                    "control law is tabulated for {} cells, the state it reads has {rows}",
                    law.cells()
                ));
            }
        }
        Ok(())
    }

    fn estimation_error(&self, plant: &GridState, obs: &GridState) -> Result<GridState> {
        if obs.n == plant.n {
            obs.minus(plant)
        } else {
            lift_state(obs, plant.n)?.minus(plant)
        }
    }

    /// Error in the observer's resolution, the plant's `u` rows resampled
    /// to the observer's cells.
    fn fine_error(&self, plant: &GridState, obs: &GridState) -> Result<GridState> {
        if obs.n == plant.n {
            return obs.minus(plant);
        }
        let lifted = lift_state(plant, obs.n)?;
        obs.minus(&lifted)
    }
}

/// Resamples the `u` rows of `s` onto `cells` cells by exact overlaps.
pub fn lift_state(s: &GridState, cells: usize) -> Result<GridState> {
    let nx = s.nx;
    let mut out = GridState::zeros(cells, s.m, nx);
    out.v.copy_from_slice(&s.v);
    out.time = s.time;
    let mut col = vec![0.0; s.n];
    for k in 0..nx {
        for (i, c) in col.iter_mut().enumerate() {
            *c = s.u[i * nx + k];
        }
        let means = crate::numerics::resample_means(&col, cells)?;
        for (i, v) in means.into_iter().enumerate() {
            out.u[i * nx + k] = v;
        }
    }
    Ok(out)
}

/// Recorded closed-loop quantities, one entry per sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub m: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
    /// `Ŷ = v̂(·, 0)`, empty rows without an observer.
    pub estimates: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub e_norms: Vec<f64>,
    /// `‖z − F*ẑ‖_E`, empty without an observer.
    pub error_norms: Vec<f64>,
    /// Estimation error in the observer's resolution, if requested.
    pub error_states: Vec<GridState>,
    pub diverged_at: Option<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max_j |Ŷ_j − Y_j|` per sample.
    pub fn output_errors(&self) -> Vec<f64> {
        self.outputs
            .iter()
            .zip(&self.estimates)
            .map(|(y, yh)| y.iter().zip(yh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect()
    }

    pub fn write_csv(&self, w: impl Write, delimiter: u8) -> Result<()> {
        let mut out = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
        let mut header = vec!["time".to_string()];
        for prefix in ["Y", "Yhat", "U"] {
            header.extend((1..=self.m).map(|j| format!("{prefix}{j}")));
        }
        header.push("e_norm".into());
        header.push("error_norm".into());
        out.write_record(&header)?;
        let fmt = |x: f64| format!("{x:.12e}");
        for s in 0..self.len() {
            let mut row = vec![fmt(self.times[s])];
            row.extend(self.outputs[s].iter().map(|&x| fmt(x)));
            match self.estimates.get(s).filter(|e| !e.is_empty()) {
                Some(e) => row.extend(e.iter().map(|&x| fmt(x))),
                None => row.extend(std::iter::repeat(String::new()).take(self.m)),
            }
            row.extend(self.controls[s].iter().map(|&x| fmt(x)));
            row.push(fmt(self.e_norms[s]));
            row.push(self.error_norms.get(s).map(|&x| fmt(x)).unwrap_or_default());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the scenario with a fixed step until the horizon. On blow-up the
/// samples recorded so far travel with the error.
pub fn simulate(sc: &Scenario, cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    sc.check()?;
    if sc.plant.grid.len() != cfg.nx {
        return invalid(format!("plant is tabulated on {} points, config asks for {}", sc.plant.grid.len(), cfg.nx));
    }
    let mut speed = cfl_dt(&sc.plant, cfg.cfl)?;
    if let Some(o) = &sc.observer {
        speed = speed.min(cfl_dt(&o.system, cfg.cfl)?);
    }
    let dt = speed;
    let steps = (cfg.horizon / dt).floor() as usize;
    let grid = sc.plant.grid;
    let m = sc.plant.m;

    let mut trace = SimTrace { m, dt, ..Default::default() };
    let mut plant = sc.init.clone();
    let mut obs = sc.observer.as_ref().map(|o| o.init.clone());

    let record = |trace: &mut SimTrace, plant: &GridState, obs: &Option<GridState>, u: &[f64]| -> Result<()> {
        trace.times.push(plant.time);
        trace.outputs.push(plant.output());
        trace.controls.push(u.to_vec());
        trace.e_norms.push(plant.e_norm(&grid));
        match obs {
            Some(o) => {
                trace.estimates.push(o.output());
                trace.error_norms.push(sc.estimation_error(plant, o)?.e_norm(&grid));
                if cfg.keep_error_states {
                    trace.error_states.push(sc.fine_error(plant, o)?);
                }
            }
            None => trace.estimates.push(Vec::new()),
        }
        Ok(())
    };

    let mut u = match &sc.law {
        None => vec![0.0; m],
        Some((law, Feedback::Plant)) => law.apply(&plant)?,
        Some((law, Feedback::Observer)) => law.apply(obs.as_ref().expect("checked"))?,
    };
    let attach = |e: Error, trace: &SimTrace| match e {
        Error::Divergence { time, .. } => {
            let mut t = trace.clone();
            t.diverged_at = Some(time);
            Error::Divergence { time, trace: Box::new(t) }
        }
        other => other,
    };
    for step in 0..=steps {
        if step % cfg.record_stride == 0 {
            record(&mut trace, &plant, &obs, &u)?;
        }
        if step == steps {
            break;
        }
        let y = plant.output();
        let mut next = advance_plant(&plant, &sc.plant, dt)?;
        let mut next_obs = match (&obs, &sc.observer) {
            (Some(o), Some(setup)) => {
                Some(advance_observer(o, &setup.system, &setup.gains, &y, &next.output(), dt)?)
            }
            _ => None,
        };
        u = match &sc.law {
            None => vec![0.0; m],
            Some((law, Feedback::Plant)) => law.close(&next, &sc.plant)?,
            Some((law, Feedback::Observer)) => {
                let setup = sc.observer.as_ref().expect("checked");
                law.close(next_obs.as_ref().expect("checked"), &setup.system)?
            }
        };
        if let Err(e) = close_right(&mut next, &sc.plant, &u) {
            return Err(attach(e, &trace));
        }
        if let (Some(o), Some(setup)) = (next_obs.as_mut(), &sc.observer) {
            if let Err(e) = close_right(o, &setup.system, &u) {
                return Err(attach(e, &trace));
            }
        }
        plant = next;
        obs = next_obs;
    }
    Ok(trace)
}
