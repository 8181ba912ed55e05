use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use scip_core::{Error, Result};

/// Written next to the primary output as `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub tool_version: String,
    pub wall_clock_s: f64,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                subcommand: subcommand.into(),
                config: serde_json::Value::Null,
                inputs: Vec::new(),
                outputs: Vec::new(),
                seeds: BTreeMap::new(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                wall_clock_s: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, config: &impl Serialize) -> Result<&mut Self> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(self)
    }

    /// Records an input, failing early with the path when it does not exist.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        if !path.exists() {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::NotFound,
                format!("{}: no such file", path.display()),
            )));
        }
        self.manifest.inputs.push(path.to_path_buf());
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.to_path_buf());
        self
    }

    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.manifest.seeds.insert(name.into(), seed);
        self
    }

    /// Writes the manifest beside the first output.
    pub fn write(&mut self) -> Result<PathBuf> {
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        let primary = self
            .manifest
            .outputs
            .first()
            .cloned()
            .unwrap_or_else(|| PathBuf::from(&self.manifest.subcommand));
        let path = manifest_path(&primary);
        serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &self.manifest)?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Seed for runs that were not given one. Printed and recorded by callers.
pub fn fresh_seed() -> u64 {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    scip_core::seed::mix(nanos ^ ((std::process::id() as u64) << 32))
}
