use std::path::{Path, PathBuf};

use hypercont::kernels::{GainSampling, CLOSED_FORMS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// `n+m` observer with sampled continuum gains and the matching law.
    Thm3,
    /// Continuum observer on `n̂` rows in the loop with the `n+m` plant.
    Thm4,
    OpenLoop,
    StateFeedback,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Thm3 => "thm3",
            ScenarioKind::Thm4 => "thm4",
            ScenarioKind::OpenLoop => "open-loop",
            ScenarioKind::StateFeedback => "state-feedback",
        }
    }

    pub fn has_observer(self) -> bool {
        matches!(self, ScenarioKind::Thm3 | ScenarioKind::Thm4)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSource {
    Numeric,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantSpec {
    /// The two-channel benchmark, built for every `n` in the list.
    Example,
    /// A single tabulated plant; its `n` must be the only list entry.
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub n: Vec<usize>,
    pub n_hat: usize,
    /// Allows `n > n_hat` in a continuum-observer scenario.
    pub allow_n_above_n_hat: bool,
    pub plant: PlantSpec,
    pub nx: usize,
    pub cfl: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub burn_in: f64,
    pub kernel_source: KernelSource,
    pub closed_form: String,
    /// Nodes per side of the kernel mesh.
    pub mesh_resolution: usize,
    pub y_intervals: usize,
    pub kernel_tol: f64,
    pub kernel_max_iter: usize,
    pub gain_sampling: GainSampling,
    /// Evaluate the observer Lyapunov functional along the error trajectory.
    pub lyapunov: bool,
    pub out: PathBuf,
    /// Kernel cache directory; none disables the on-disk cache.
    pub cache: Option<PathBuf>,
    pub workers: usize,
    pub delimiter: char,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Thm3,
            n: vec![8, 9, 10, 11],
            n_hat: 60,
            allow_n_above_n_hat: false,
            plant: PlantSpec::Example,
            nx: 128,
            cfl: 0.9,
            horizon: 30.0,
            record_stride: 10,
            burn_in: 0.2,
            kernel_source: KernelSource::ClosedForm,
            closed_form: "example-observer".into(),
            mesh_resolution: 65,
            y_intervals: 120,
            kernel_tol: 1e-8,
            kernel_max_iter: 200,
            gain_sampling: GainSampling::CellMean,
            lyapunov: false,
            out: PathBuf::from("out"),
            cache: None,
            workers: 0,
            delimiter: ',',
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n.is_empty() {
            return bad("the n list is empty".into());
        }
        if self.n.contains(&0) {
            return bad("n must be positive".into());
        }
        if self.nx < 3 {
            return bad(format!("nx = {} is too small", self.nx));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl = {} is outside (0, 1]", self.cfl));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon = {} must be positive", self.horizon));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return bad(format!("burn_in = {} is outside [0, 1)", self.burn_in));
        }
        if self.mesh_resolution < 3 || self.y_intervals < 1 {
            return bad("kernel mesh needs mesh_resolution >= 3 and y_intervals >= 1".into());
        }
        if !(self.kernel_tol > 0.0) || self.kernel_max_iter == 0 {
            return bad("kernel_tol must be positive and kernel_max_iter at least 1".into());
        }
        if self.kernel_source == KernelSource::ClosedForm && !CLOSED_FORMS.contains(&self.closed_form.as_str()) {
            return bad(format!(
                "unknown closed form '{}', available: {}",
                self.closed_form,
                CLOSED_FORMS.join(", ")
            ));
        }
        if self.scenario == ScenarioKind::Thm4 {
            if self.n_hat == 0 {
                return bad("n_hat must be positive".into());
            }
            let max = *self.n.iter().max().expect("non-empty");
            if max > self.n_hat && !self.allow_n_above_n_hat {
                return bad(format!(
                    "n = {max} exceeds n_hat = {}; set allow_n_above_n_hat to override",
                    self.n_hat
                ));
            }
        }
        if let PlantSpec::Table(_) = self.plant {
            if self.n.len() != 1 {
                return bad("a tabulated plant fixes n; list exactly one value".into());
            }
        }
        if self.lyapunov && !self.scenario.has_observer() {
            return bad("the Lyapunov trace needs an observer scenario".into());
        }
        if !self.delimiter.is_ascii() {
            return bad("delimiter must be a single ASCII character".into());
        }
        Ok(())
    }

    pub fn delimiter_byte(&self) -> u8 {
        self.delimiter as u8
    }

    pub fn trace_name(&self, n: usize) -> String {
        format!("{}_n{n}.csv", self.scenario.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_kebab_case_fields() {
        let cfg: ScenarioConfig = toml::from_str(
            r#"
            scenario = "thm4"
            n = [53, 55]
            gain_sampling = "node"
            kernel_source = "numeric"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::Thm4);
        assert_eq!(cfg.gain_sampling, GainSampling::Node);
        assert_eq!(cfg.n_hat, 60);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_n_above_n_hat() {
        let cfg = ScenarioConfig { scenario: ScenarioKind::Thm4, n: vec![61], ..Default::default() };
        assert!(cfg.validate().is_err());
        let ok = ScenarioConfig { allow_n_above_n_hat: true, ..cfg };
        ok.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(toml::from_str::<ScenarioConfig>("nn = 3").is_err());
    }
}
