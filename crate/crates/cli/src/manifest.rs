//! Per-run manifest: what ran, on which inputs, producing which outputs.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Free-form notes such as the hypervolume reference point.
    pub notes: serde_json::Value,
    pub runtime_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Collects manifest fields over the course of one command.
pub struct Recorder {
    command: &'static str,
    started: Instant,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub notes: serde_json::Map<String, serde_json::Value>,
}

impl Recorder {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: serde_json::Map::new(),
        }
    }

    /// Input digests are taken here, after the run, so a manifest always
    /// describes the files as they were read.
    pub fn finish(self, path: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: std::env::args().collect(),
            version: VERSION,
            seed: self.seed,
            config: self.config,
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
            notes: serde_json::Value::Object(self.notes),
            runtime_s: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(path, text + "\n").with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

/// Sibling of the primary output with its extension replaced, e.g.
/// `frontier.csv` → `frontier.manifest.json`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}
