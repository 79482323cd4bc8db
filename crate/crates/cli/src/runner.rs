use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use hypercont::control::OutputLaw;
use hypercont::diagnostics::{classify, lyapunov_trace, LyapunovEvaluator, StabilityVerdict};
use hypercont::kernels::{
    build_trimesh, closed_form_kernels, compute_h, lyapunov_weights, make_gains_with, solve_control_kernels,
    solve_d_minus, solve_d_plus, solve_observer_kernels, DMinusConfig, KernelField, KernelKind, KernelSolverConfig,
    LyapunovData, LyapunovWeights, TriMesh,
};
use hypercont::model::{
    build_example_continuum, build_example_nm, continuum_from_discrete, read_plant_table, ContinuumParams,
    PlantParams,
};
use hypercont::numerics::{XGrid, YGrid};
use hypercont::sim::{simulate, DiscreteSystem, Feedback, GridState, Observer, Scenario, SimConfig, SimTrace};
use hypercont::Error as CoreError;
use log::{info, warn};
use rayon::prelude::*;

use crate::cache::{CacheKey, KernelCache};
use crate::config::{KernelSource, PlantSpec, ScenarioConfig, ScenarioKind};
use crate::manifest::{FileEntry, Manifest, RunEntry, Status};

/// Continuum parameters and kernels shared by every `n` of a run.
#[derive(Debug, Clone)]
pub struct Kernels {
    pub continuum: ContinuumParams,
    pub observer: KernelField,
    pub control: KernelField,
}

pub struct Plants {
    continuum: ContinuumParams,
    table: Option<PlantParams>,
}

impl Plants {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        match &cfg.plant {
            PlantSpec::Example => Ok(Self { continuum: build_example_continuum(), table: None }),
            PlantSpec::Table(path) => {
                let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let p = read_plant_table(file, cfg.delimiter_byte())?;
                if p.n() != cfg.n[0] {
                    return Err(anyhow!("plant table has n = {}, config lists n = {}", p.n(), cfg.n[0]));
                }
                Ok(Self { continuum: continuum_from_discrete(&p)?, table: Some(p) })
            }
        }
    }

    pub fn continuum(&self) -> &ContinuumParams {
        &self.continuum
    }

    pub fn plant(&self, n: usize) -> Result<PlantParams> {
        match &self.table {
            Some(p) => Ok(p.clone()),
            None => Ok(build_example_nm(n)?),
        }
    }
}

pub fn solver_config(cfg: &ScenarioConfig) -> KernelSolverConfig {
    KernelSolverConfig { tol: cfg.kernel_tol, max_iter: cfg.kernel_max_iter, artificial: None }
}

fn kernel_mesh(cfg: &ScenarioConfig, c: &ContinuumParams) -> Result<(Arc<TriMesh>, YGrid)> {
    let mesh = build_trimesh(c.m(), |j, x| c.mu(j, x), cfg.mesh_resolution)?;
    Ok((Arc::new(mesh), YGrid::new(cfg.y_intervals)?))
}

fn cache_key(cfg: &ScenarioConfig, c: &ContinuumParams, kind: KernelKind) -> CacheKey {
    let source = match (kind, &cfg.kernel_source) {
        (KernelKind::Observer, KernelSource::ClosedForm) => cfg.closed_form.clone(),
        _ => "numeric".into(),
    };
    CacheKey {
        fingerprint: c.fingerprint(),
        resolution: cfg.mesh_resolution,
        y_intervals: cfg.y_intervals,
        tol: cfg.kernel_tol,
        max_iter: cfg.kernel_max_iter,
        kind,
        source,
    }
}

/// Observer kernels from the configured source, control kernels always by
/// the numerical solver. Cached entries are used and written when a cache
/// directory is configured.
pub fn obtain_kernels(cfg: &ScenarioConfig, c: &ContinuumParams) -> Result<Kernels> {
    let (mesh, yg) = kernel_mesh(cfg, c)?;
    let cache = cfg.cache.as_ref().map(KernelCache::new);
    let solve = |kind: KernelKind| -> Result<KernelField> {
        let t = Instant::now();
        let field = match (kind, &cfg.kernel_source) {
            (KernelKind::Observer, KernelSource::ClosedForm) => {
                closed_form_kernels(&cfg.closed_form, mesh.clone(), yg.clone())?
            }
            (KernelKind::Observer, KernelSource::Numeric) => {
                solve_observer_kernels(c, &mesh, &yg, &solver_config(cfg))?
            }
            (KernelKind::Control, _) => solve_control_kernels(c, &mesh, &yg, &solver_config(cfg))?,
        };
        info!("{kind:?} kernels ready in {:.2?}", t.elapsed());
        Ok(field)
    };
    let get = |kind: KernelKind| -> Result<KernelField> {
        let Some(cache) = &cache else { return solve(kind) };
        let key = cache_key(cfg, c, kind);
        match cache.load(&key, &mesh, &yg) {
            Ok(Some(f)) => {
                info!("{kind:?} kernels from cache {}", cache.path(&key).display());
                return Ok(f);
            }
            Ok(None) => {}
            Err(e) => warn!("ignoring unreadable cache entry: {e:#}"),
        }
        let f = solve(kind)?;
        cache.store(&key, &f)?;
        Ok(f)
    };
    Ok(Kernels { continuum: c.clone(), observer: get(KernelKind::Observer)?, control: get(KernelKind::Control)? })
}

pub fn lyapunov_weights_for(k: &Kernels) -> Result<LyapunovWeights> {
    let c = &k.continuum;
    let dm = solve_d_minus(&k.observer, c, &DMinusConfig::default())?;
    let dp = solve_d_plus(&k.observer, &dm, c)?;
    let h = compute_h(&k.observer, c);
    let data = LyapunovData::from_parts(c, &k.observer, &dm, &dp, &h);
    Ok(lyapunov_weights(&data)?)
}

/// Every plant component starts at `sin(2πx)/2`, the observer at zero.
pub fn initial_state(n: usize, m: usize, grid: &XGrid) -> GridState {
    GridState::from_fn(n, m, grid, |_, x| 0.5 * (2.0 * PI * x).sin(), |_, x| 0.5 * (2.0 * PI * x).sin())
}

pub fn sim_config(cfg: &ScenarioConfig) -> SimConfig {
    SimConfig {
        nx: cfg.nx,
        cfl: cfg.cfl,
        horizon: cfg.horizon,
        record_stride: cfg.record_stride,
        keep_error_states: cfg.lyapunov,
    }
}

pub fn build_scenario(cfg: &ScenarioConfig, k: &Kernels, p: &PlantParams) -> Result<Scenario> {
    let c = &k.continuum;
    let (n, m) = (p.n(), p.m());
    let grid = XGrid::new(cfg.nx)?;
    let plant = DiscreteSystem::from_plant(p, &grid);
    let init = initial_state(n, m, &grid);
    let sampling = cfg.gain_sampling;
    let sc = match cfg.scenario {
        ScenarioKind::OpenLoop => Scenario { plant, init, observer: None, law: None },
        ScenarioKind::StateFeedback => {
            let gains = make_gains_with(&k.observer, &k.control, c, n, &grid, sampling)?;
            let law = OutputLaw::nm(&gains, p)?;
            Scenario { plant, init, observer: None, law: Some((law, Feedback::Plant)) }
        }
        ScenarioKind::Thm3 => {
            let gains = make_gains_with(&k.observer, &k.control, c, n, &grid, sampling)?;
            let law = OutputLaw::nm(&gains, p)?;
            let observer = Observer { system: plant.clone(), gains, init: GridState::zeros(n, m, cfg.nx) };
            Scenario { plant, init, observer: Some(observer), law: Some((law, Feedback::Observer)) }
        }
        ScenarioKind::Thm4 => {
            let nh = cfg.n_hat;
            let system = DiscreteSystem::from_continuum(c, nh, &grid)?;
            let gains = make_gains_with(&k.observer, &k.control, c, nh, &grid, sampling)?;
            let law = OutputLaw::continuum_with(&k.control, c, nh, &grid, sampling)?.with_r_of(&system)?;
            let observer = Observer { system, gains, init: GridState::zeros(nh, m, cfg.nx) };
            Scenario { plant, init, observer: Some(observer), law: Some((law, Feedback::Observer)) }
        }
    };
    Ok(sc)
}

/// Trace and verdict for a single `n`. A divergent run is returned with
/// its partial trace and an unstable verdict.
pub fn simulate_n(cfg: &ScenarioConfig, k: &Kernels, plants: &Plants, n: usize) -> Result<(SimTrace, StabilityVerdict)> {
    let p = plants.plant(n)?;
    let sc = build_scenario(cfg, k, &p)?;
    let trace = match simulate(&sc, &sim_config(cfg)) {
        Ok(t) => t,
        Err(CoreError::Divergence { trace, .. }) => *trace,
        Err(e) => return Err(e.into()),
    };
    let verdict = classify(&trace, cfg.burn_in)?;
    Ok((trace, verdict))
}

fn observer_cells(cfg: &ScenarioConfig, n: usize) -> usize {
    match cfg.scenario {
        ScenarioKind::Thm4 => cfg.n_hat,
        _ => n,
    }
}

fn write_file(dir: &Path, name: &str, write: impl FnOnce(BufWriter<fs::File>) -> Result<()>) -> Result<FileEntry> {
    let path = dir.join(name);
    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write(BufWriter::new(f))?;
    FileEntry::hash(dir, name)
}

fn run_n(cfg: &ScenarioConfig, k: &Kernels, plants: &Plants, weights: Option<&LyapunovWeights>, n: usize) -> RunEntry {
    let t = Instant::now();
    let mut entry = RunEntry::new(n);
    let result = (|| -> Result<()> {
        let (trace, verdict) = simulate_n(cfg, k, plants, n)?;
        entry.set_verdict(&verdict);
        let d = cfg.delimiter_byte();
        entry.files.push(write_file(&cfg.out, &cfg.trace_name(n), |w| Ok(trace.write_csv(w, d)?))?);
        if let Some(w) = weights {
            let grid = XGrid::new(cfg.nx)?;
            let eval = LyapunovEvaluator::new(&k.observer, w, &k.continuum, observer_cells(cfg, n), &grid)?;
            let values = lyapunov_trace(&trace.error_states, &eval);
            let name = format!("{}_n{n}_lyapunov.csv", cfg.scenario.name());
            entry.files.push(write_file(&cfg.out, &name, |w| {
                let mut out = csv::WriterBuilder::new().delimiter(d).from_writer(w);
                out.write_record(["time", "V"])?;
                for (t, v) in trace.times.iter().zip(&values) {
                    out.write_record([format!("{t:.12e}"), v.map(|v| format!("{v:.12e}")).unwrap_or_default()])?;
                }
                out.flush()?;
                Ok(())
            })?);
        }
        Ok(())
    })();
    if let Err(e) = result {
        entry.status = Status::Failed;
        entry.error = Some(format!("{e:#}"));
        warn!("n = {n} failed: {e:#}");
    } else {
        info!("n = {n}: {} ({:.2?})", entry.verdict.map(|v| v.to_string()).unwrap_or_default(), t.elapsed());
    }
    entry
}

/// Solves or loads the kernels once, then runs every `n` on the worker
/// pool. Writes the traces, `verdicts.csv` and `manifest.json` into the
/// output directory.
pub fn run(cfg: &ScenarioConfig) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let plants = Plants::from_config(cfg)?;
    let kernels = obtain_kernels(cfg, plants.continuum())?;
    let weights = if cfg.lyapunov { Some(lyapunov_weights_for(&kernels)?) } else { None };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let entries: Vec<RunEntry> =
        pool.install(|| cfg.n.par_iter().map(|&n| run_n(cfg, &kernels, &plants, weights.as_ref(), n)).collect());
    let mut manifest = Manifest::new(cfg, entries);
    manifest.write_verdicts(&cfg.out, cfg.delimiter_byte())?;
    manifest.save(&cfg.out)?;
    Ok(manifest)
}
