//! Run manifest: written when a run starts, finalized when it ends.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{Origin, Override, Resolved, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Resolved settings in the config-file grammar; `--config` accepts it as is.
pub const RESOLVED_FILE: &str = "resolved_config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Pass,
    Fail,
    Aborted,
}

#[derive(Clone, Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub wall_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Origin>,
    pub overrides: Vec<Override>,
    pub status: Status,
    pub exit_code: Option<i32>,
    pub phases: Vec<Phase>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub metrics: serde_json::Map<String, serde_json::Value>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    #[serde(skip)]
    dir: PathBuf,
}

impl RunManifest {
    /// Creates the output directory and writes the initial manifest.
    pub fn start(subcommand: &str, resolved: &Resolved) -> io::Result<Self> {
        let dir = resolved.config.out.clone();
        std::fs::create_dir_all(&dir)?;
        let m = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config: resolved.config.clone(),
            provenance: resolved.provenance.clone(),
            overrides: resolved.overrides.clone(),
            status: Status::Running,
            exit_code: None,
            phases: Vec::new(),
            warnings: Vec::new(),
            error: None,
            metrics: serde_json::Map::new(),
            artifacts: Vec::new(),
            dir,
        };
        let resolved_json = serde_json::to_string_pretty(&m.config).map_err(io::Error::other)?;
        std::fs::write(m.dir.join(RESOLVED_FILE), resolved_json + "\n")?;
        m.write()?;
        Ok(m)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&self) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(self.dir.join(MANIFEST_FILE), json + "\n")
    }

    /// Times `f` as a named phase.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.phases.push(Phase {
            name: name.to_string(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metrics.insert(key.to_string(), v);
    }

    /// Writes `contents` into the output directory and records it.
    pub fn artifact(&mut self, name: &str, contents: &str) -> io::Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.record(name);
        Ok(())
    }

    pub fn record(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
    }

    pub fn finish(&mut self, status: Status, code: i32, warnings: Vec<String>) -> io::Result<()> {
        self.status = status;
        self.exit_code = Some(code);
        self.warnings.extend(warnings);
        self.write()
    }
}
