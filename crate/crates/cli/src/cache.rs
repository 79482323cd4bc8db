//! On-disk kernel cache. Entries are keyed by a SHA-256 digest of the
//! continuum fingerprint and the solver settings, and hold the raw kernel
//! tables as little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use hypercont::kernels::{KernelField, KernelKind, TriMesh};
use hypercont::numerics::YGrid;
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 8] = b"HCKERN01";

#[derive(Debug, Clone, PartialEq)]
pub struct CacheKey {
    pub fingerprint: Vec<f64>,
    pub resolution: usize,
    pub y_intervals: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub kind: KernelKind,
    /// `numeric` or the closed-form name.
    pub source: String,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.fingerprint {
            h.update(v.to_le_bytes());
        }
        h.update((self.resolution as u64).to_le_bytes());
        h.update((self.y_intervals as u64).to_le_bytes());
        h.update(self.tol.to_le_bytes());
        h.update((self.max_iter as u64).to_le_bytes());
        h.update([match self.kind {
            KernelKind::Control => 0u8,
            KernelKind::Observer => 1u8,
        }]);
        h.update(self.source.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone)]
pub struct KernelCache {
    dir: PathBuf,
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.bin", key.digest()))
    }

    pub fn load(&self, key: &CacheKey, mesh: &Arc<TriMesh>, ygrid: &YGrid) -> Result<Option<KernelField>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let mut bytes = Vec::new();
        fs::File::open(&path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .with_context(|| format!("reading {}", path.display()))?;
        decode(&bytes, key.kind, mesh.clone(), ygrid.clone())
            .with_context(|| format!("decoding {}", path.display()))
            .map(Some)
    }

    pub fn store(&self, key: &CacheKey, field: &KernelField) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.path(key);
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(&encode(field))?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

fn encode(field: &KernelField) -> Vec<u8> {
    let (ydep, mat) = field.raw();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for n in [ydep.len(), mat.len()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for table in ydep.iter().chain(mat) {
        out.extend_from_slice(&(table.len() as u64).to_le_bytes());
        for v in table {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            bail!("truncated cache entry");
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }

    fn word(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize)
    }
}

fn decode(bytes: &[u8], kind: KernelKind, mesh: Arc<TriMesh>, ygrid: YGrid) -> Result<KernelField> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        bail!("not a kernel cache entry");
    }
    let n_ydep = r.word()?;
    let n_mat = r.word()?;
    let mut tables = Vec::with_capacity(n_ydep + n_mat);
    for _ in 0..n_ydep + n_mat {
        let len = r.word()?;
        let raw = r.take(len.checked_mul(8).context("oversized table")?)?;
        tables.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect::<Vec<_>>(),
        );
    }
    if r.pos != bytes.len() {
        bail!("trailing bytes in cache entry");
    }
    let mat = tables.split_off(n_ydep);
    Ok(KernelField::from_raw(kind, mesh, ygrid, tables, mat)?)
}
