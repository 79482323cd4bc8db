//! Scenario runner for the continuum-kernel observer experiments: config
//! parsing, a kernel cache, per-`n` sweeps and run manifests.

pub mod cache;
pub mod config;
pub mod manifest;
pub mod runner;

pub use config::{ConfigError, KernelSource, PlantSpec, ScenarioConfig, ScenarioKind};
pub use manifest::{merge, Manifest, RunEntry, Status, Summary};
pub use runner::{build_scenario, obtain_kernels, run, simulate_n, Kernels, Plants};
