use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hypercont::diagnostics::write_verdicts;
use hypercont::kernels::{kernel_residual, write_kernel_csv, GainSampling};
use hypercont_cli::manifest::{FileEntry, MANIFEST_NAME};
use hypercont_cli::runner::{obtain_kernels, solver_config, Plants};
use hypercont_cli::{merge, run, ConfigError, KernelSource, Manifest, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "hypercont", version, about = "Continuum-kernel observer and output-feedback experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve (or load) the observer and control kernels and export them.
    SolveKernels(Common),
    /// Simulate every n of the config and write traces plus a manifest.
    Run(Common),
    /// Like `run` over an inclusive range of n, then print the summary.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 1)]
        step: usize,
    },
    /// Merge manifests into one verdict table and per-scenario thresholds.
    Report {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        /// Write the merged table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel residual checks for a config, or re-hash a run manifest.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario config; defaults apply to missing fields.
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    n_hat: Option<usize>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    kernel_source: Option<String>,
    #[arg(long)]
    closed_form: Option<String>,
    #[arg(long)]
    mesh_resolution: Option<usize>,
    #[arg(long)]
    gain_sampling: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    lyapunov: bool,
}

fn parse_enum<T: serde::de::DeserializeOwned>(field: &str, v: &str) -> Result<T, ConfigError> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(v))
        .map_err(|e| ConfigError::Invalid(format!("{field}: {e}")))
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.scenario {
            cfg.scenario = parse_enum::<ScenarioKind>("scenario", v)?;
        }
        if let Some(v) = &self.n {
            cfg.n = v.clone();
        }
        if let Some(v) = self.n_hat {
            cfg.n_hat = v;
        }
        if let Some(v) = self.nx {
            cfg.nx = v;
        }
        if let Some(v) = self.cfl {
            cfg.cfl = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = &self.kernel_source {
            cfg.kernel_source = parse_enum::<KernelSource>("kernel_source", v)?;
        }
        if let Some(v) = &self.closed_form {
            cfg.closed_form = v.clone();
        }
        if let Some(v) = self.mesh_resolution {
            cfg.mesh_resolution = v;
        }
        if let Some(v) = &self.gain_sampling {
            cfg.gain_sampling = parse_enum::<GainSampling>("gain_sampling", v)?;
        }
        if let Some(v) = &self.cache {
            cfg.cache = Some(v.clone());
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.lyapunov |= self.lyapunov;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(manifest: &Manifest) -> Result<()> {
    let summary = merge(std::slice::from_ref(manifest));
    write_verdicts(&summary.rows, std::io::stdout().lock(), b'\t')?;
    for (s, t) in &summary.thresholds {
        println!("{s}\tn*\t{}", t.map(|n| n.to_string()).unwrap_or_else(|| "none".into()));
    }
    for r in manifest.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("n = {} failed: {}", r.n, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn solve_kernels(cfg: &ScenarioConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let plants = Plants::from_config(cfg)?;
    let k = obtain_kernels(cfg, plants.continuum())?;
    let mut files = Vec::new();
    for (name, field) in [("observer_kernels.csv", &k.observer), ("control_kernels.csv", &k.control)] {
        let f = fs::File::create(cfg.out.join(name))?;
        write_kernel_csv(field, BufWriter::new(f), cfg.delimiter_byte())?;
        files.push(FileEntry::hash(&cfg.out, name)?);
    }
    let mut manifest = Manifest::new(cfg, Vec::new());
    manifest.files = files;
    manifest.save(&cfg.out)?;
    println!("kernels written to {}", cfg.out.display());
    Ok(())
}

/// Residuals of both kernel fields; `false` if a boundary condition is
/// violated beyond round-off.
fn verify_kernels(cfg: &ScenarioConfig) -> Result<bool> {
    let plants = Plants::from_config(cfg)?;
    let k = obtain_kernels(cfg, plants.continuum())?;
    let sc = solver_config(cfg);
    let mut ok = true;
    for field in [&k.observer, &k.control] {
        let rep = kernel_residual(field, &k.continuum, &sc);
        println!("{:?}\tinterior\t{:.3e}\tboundary\t{:.3e}", field.kind(), rep.interior_max(), rep.boundary_max());
        for r in &rep.regions {
            println!("  {}\tregion {}\t{:.3e}\t({} nodes)", r.component, r.region + 1, r.max, r.nodes);
        }
        for b in &rep.boundaries {
            println!("  {}\t{}\t{:.3e}", b.component, b.condition, b.max);
        }
        ok &= rep.boundary_max() <= 1e-10;
    }
    Ok(ok)
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let code = |failed: bool| if failed { ExitCode::from(2) } else { ExitCode::SUCCESS };
    match cli.cmd {
        Command::SolveKernels(c) => {
            solve_kernels(&c.load()?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(c) => {
            let m = run(&c.load()?)?;
            print_summary(&m)?;
            Ok(code(m.any_failed()))
        }
        Command::Sweep { common, from, to, step } => {
            let mut cfg = common.load()?;
            if from > to || step == 0 {
                return Err(ConfigError::Invalid(format!("empty sweep {from}..={to} step {step}")).into());
            }
            cfg.n = (from..=to).step_by(step).collect();
            cfg.validate()?;
            let m = run(&cfg)?;
            print_summary(&m)?;
            Ok(code(m.any_failed()))
        }
        Command::Report { manifests, out } => {
            let loaded = manifests.iter().map(|p| Manifest::load(p)).collect::<Result<Vec<_>>>()?;
            let summary = merge(&loaded);
            match &out {
                Some(p) => write_verdicts(&summary.rows, fs::File::create(p)?, b',')?,
                None => write_verdicts(&summary.rows, std::io::stdout().lock(), b'\t')?,
            }
            for (s, t) in &summary.thresholds {
                println!("{s}\tn*\t{}", t.map(|n| n.to_string()).unwrap_or_else(|| "none".into()));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { common, manifest } => {
            if let Some(path) = manifest {
                let path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path };
                let m = Manifest::load(&path)?;
                let dir = path.parent().context("manifest has no parent directory")?;
                let bad = m.verify(dir);
                for b in &bad {
                    eprintln!("{b}");
                }
                println!("{} files checked, {} mismatched", m.all_files().count(), bad.len());
                return Ok(code(!bad.is_empty()));
            }
            Ok(code(!verify_kernels(&common.load()?)?))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
