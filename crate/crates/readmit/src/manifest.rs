use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliResult;
use crate::io::write_json;

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// The fully resolved configuration the command ran with.
    pub resolved_config: Value,
    pub version: String,
    pub wall_time_s: f64,
}

/// Collects a manifest while a command runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.into(),
                args: std::env::args().skip(1).collect(),
                config_path: None,
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                resolved_config: Value::Null,
                version: env!("CARGO_PKG_VERSION").into(),
                wall_time_s: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn config_path(&mut self, p: Option<&Path>) -> &mut Self {
        self.manifest.config_path = p.map(Path::to_path_buf);
        self
    }

    pub fn seed(&mut self, s: u64) -> &mut Self {
        self.manifest.seed = Some(s);
        self
    }

    pub fn input(&mut self, p: &Path) -> &mut Self {
        self.manifest.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(&mut self, p: &Path) -> &mut Self {
        self.manifest.outputs.push(p.to_path_buf());
        self
    }

    pub fn config<T: Serialize>(&mut self, c: &T) -> CliResult<&mut Self> {
        self.manifest.resolved_config = serde_json::to_value(c)?;
        Ok(self)
    }

    /// Stamp the wall time and write `manifest_<command>.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> CliResult<RunManifest> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        write_json(&manifest_path(dir, &self.manifest.command), &self.manifest)?;
        Ok(self.manifest)
    }
}

pub fn manifest_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("manifest_{command}.json"))
}
