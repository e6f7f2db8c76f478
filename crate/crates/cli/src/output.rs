//! Output files and the hash manifest.

use std::fs;
use std::path::{Path, PathBuf};

use allelopathy::{Configuration, SiteState};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// Gray level of each state in snapshots.
pub fn gray(s: SiteState) -> u8 {
    match s {
        SiteState::Free => 255,
        SiteState::Blue => 0,
        SiteState::Red => 170,
        SiteState::Frozen => 85,
    }
}

/// Binary PGM of a configuration. Coordinate 0 runs along a row; the
/// remaining coordinates index rows, so a 3D torus is a stack of slices.
pub fn pgm(c: &Configuration) -> Vec<u8> {
    let sides = c.lattice().sides();
    let width = sides[0];
    let height = c.len() / width;
    let mut px = vec![0u8; c.len()];
    for (site, &s) in c.states().iter().enumerate() {
        let xs = c.lattice().coords(site as u32);
        let (mut row, mut stride) = (0usize, 1usize);
        for (k, &x) in xs.iter().enumerate().skip(1) {
            row += x as usize * stride;
            stride *= sides[k];
        }
        px[row * width + xs[0] as usize] = gray(s);
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&px);
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read(dir.join(MANIFEST))?;
        Ok(serde_json::from_slice(&text)?)
    }

    pub fn get(&self, path: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.path == path)
    }
}

/// Writes files into one directory and records their hashes.
pub struct Outputs {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.entries.retain(|e| e.path != name);
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_vec_pretty(value)?;
        v.push(b'\n');
        self.write(name, &v)
    }

    /// RFC-4180 CSV from a header and rows of already formatted fields.
    pub fn csv<R, F>(&mut self, name: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<F>>,
        F: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.write(name, &bytes)
    }

    /// Writes the manifest (sorted by path) and returns it.
    pub fn finish(mut self) -> Result<Manifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest {
            files: self.entries,
        };
        let mut v = serde_json::to_vec_pretty(&m)?;
        v.push(b'\n');
        fs::write(self.dir.join(MANIFEST), v)?;
        Ok(m)
    }
}

/// Shortest round-trip formatting; infinity is written as `inf`.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

/// File-name friendly time label, e.g. `t12.5`.
pub fn time_label(t: f64) -> String {
    format!("t{}", num(t))
}
