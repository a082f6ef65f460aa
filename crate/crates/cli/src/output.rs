use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputChecksum {
    pub path: String,
    pub sha256: String,
}

/// Written next to every output file as `<file>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command_line: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputChecksum>,
    pub artifact: String,
    pub artifact_sha256: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects inputs and seeds during a run and writes artifacts with their manifests.
pub struct Run {
    started: Instant,
    args: Vec<String>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<InputChecksum>,
}

impl Run {
    pub fn new() -> Self {
        Run { started: Instant::now(), args: std::env::args().collect(), seeds: BTreeMap::new(), inputs: Vec::new() }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Reads an input file and records its checksum.
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputChecksum { path: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) });
        Ok(text)
    }

    /// Writes `text` to `path` (or stdout when `None`). Files get a manifest.
    pub fn emit(&self, path: Option<&Path>, text: &str) -> Result<()> {
        let Some(path) = path else {
            print!("{text}");
            return Ok(());
        };
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        let manifest = RunManifest {
            tool: "phasekit",
            version: env!("CARGO_PKG_VERSION"),
            command_line: self.args.clone(),
            seeds: self.seeds.clone(),
            inputs: self.inputs.iter().map(|i| InputChecksum { path: i.path.clone(), sha256: i.sha256.clone() }).collect(),
            artifact: path.display().to_string(),
            artifact_sha256: sha256_hex(text.as_bytes()),
            threads: rayon::current_num_threads(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let mpath = manifest_path(path);
        fs::write(&mpath, to_json(&manifest)?).with_context(|| format!("writing {}", mpath.display()))?;
        Ok(())
    }

    pub fn emit_json<T: Serialize>(&self, path: Option<&Path>, value: &T) -> Result<()> {
        self.emit(path, &to_json(value)?)
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Pretty JSON with a trailing newline. Floats use the shortest representation
/// that parses back to the same value.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
