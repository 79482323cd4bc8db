use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hypercont::diagnostics::{write_verdicts, StabilityVerdict, Verdict, VerdictRow};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const VERDICTS_NAME: &str = "verdicts.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn hash(dir: &Path, name: &str) -> Result<Self> {
        Ok(Self { path: name.to_string(), sha256: sha256_file(&dir.join(name))? })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub n: usize,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub verdict: Option<Verdict>,
    /// `None` when the fit is not a finite number (divergence, zero trace).
    pub rate: Option<f64>,
    pub residual: Option<f64>,
    pub diverged: bool,
    pub files: Vec<FileEntry>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl RunEntry {
    pub fn new(n: usize) -> Self {
        Self { n, status: Status::Ok, error: None, verdict: None, rate: None, residual: None, diverged: false, files: Vec::new() }
    }

    pub fn set_verdict(&mut self, v: &StabilityVerdict) {
        self.verdict = Some(v.verdict);
        self.rate = finite(v.rate);
        self.residual = finite(v.residual);
        self.diverged = v.diverged;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub runs: Vec<RunEntry>,
    /// Files not tied to a single `n`.
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(cfg: &ScenarioConfig, mut runs: Vec<RunEntry>) -> Self {
        runs.sort_by_key(|r| r.n);
        Self { scenario: cfg.scenario.name().to_string(), config: cfg.clone(), runs, files: Vec::new() }
    }

    pub fn any_failed(&self) -> bool {
        self.runs.iter().any(|r| r.status == Status::Failed)
    }

    pub fn rows(&self) -> Vec<VerdictRow> {
        self.runs
            .iter()
            .filter_map(|r| {
                Some(VerdictRow {
                    scenario: self.scenario.clone(),
                    n: r.n,
                    verdict: r.verdict?,
                    rate: r.rate.unwrap_or(if r.diverged { f64::INFINITY } else { f64::NEG_INFINITY }),
                    residual: r.residual.unwrap_or(f64::NAN),
                })
            })
            .collect()
    }

    pub fn write_verdicts(&mut self, dir: &Path, delimiter: u8) -> Result<()> {
        let f = fs::File::create(dir.join(VERDICTS_NAME))?;
        write_verdicts(&self.rows(), f, delimiter)?;
        self.files.retain(|f| f.path != VERDICTS_NAME);
        self.files.push(FileEntry::hash(dir, VERDICTS_NAME)?);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn all_files(&self) -> impl Iterator<Item = &FileEntry> {
        self.runs.iter().flat_map(|r| &r.files).chain(&self.files)
    }

    /// Re-hashes every listed file; returns the mismatches as readable lines.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        let mut bad = Vec::new();
        for f in self.all_files() {
            match sha256_file(&dir.join(&f.path)) {
                Ok(h) if h == f.sha256 => {}
                Ok(h) => bad.push(format!("{}: hash {h} does not match {}", f.path, f.sha256)),
                Err(e) => bad.push(format!("{}: {e:#}", f.path)),
            }
        }
        bad
    }
}

/// Smallest tested `n` from which every larger tested `n` is stable.
pub fn threshold(rows: &[(usize, Verdict)]) -> Option<usize> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.0);
    let mut best = None;
    for &(n, v) in sorted.iter().rev() {
        if v != Verdict::Stable {
            break;
        }
        best = Some(n);
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<VerdictRow>,
    pub thresholds: BTreeMap<String, Option<usize>>,
}

/// Merges the verdicts of several manifests. A later manifest overrides an
/// earlier one for the same scenario and `n`.
pub fn merge(manifests: &[Manifest]) -> Summary {
    let mut by_key: BTreeMap<(String, usize), VerdictRow> = BTreeMap::new();
    for m in manifests {
        for r in m.rows() {
            by_key.insert((r.scenario.clone(), r.n), r);
        }
    }
    let rows: Vec<VerdictRow> = by_key.into_values().collect();
    let mut per: BTreeMap<String, Vec<(usize, Verdict)>> = BTreeMap::new();
    for r in &rows {
        per.entry(r.scenario.clone()).or_default().push((r.n, r.verdict));
    }
    let thresholds = per.into_iter().map(|(s, v)| (s, threshold(&v))).collect();
    Summary { rows, thresholds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::*;

    #[test]
    fn threshold_is_start_of_stable_tail() {
        assert_eq!(threshold(&[(4, Unstable), (8, Stable), (6, Unstable), (9, Stable)]), Some(8));
        assert_eq!(threshold(&[(4, Stable), (5, Unstable), (6, Stable)]), Some(6));
        assert_eq!(threshold(&[(4, Stable), (5, Inconclusive)]), None);
        assert_eq!(threshold(&[]), None);
    }
}
