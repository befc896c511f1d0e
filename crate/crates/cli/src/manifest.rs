//! Append-only run manifest: one JSON line per command invocation.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    /// Full TOML echo of the configuration in force.
    pub config: Option<String>,
    pub seeds: Vec<u64>,
    pub out: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub exit_code: i32,
    /// Seconds per phase, summed over seeds.
    pub phases: Vec<(String, f64)>,
    pub outputs: Vec<OutputFile>,
}

/// Collects outputs and timings while a command runs.
pub struct Recorder {
    pub manifest: RunManifest,
    out: PathBuf,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Recorder {
    pub fn new(command: &str, config_path: Option<&Path>, config: Option<String>, seeds: Vec<u64>, out: &Path) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                config_path: config_path.map(|p| p.display().to_string()),
                config,
                seeds,
                out: out.display().to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                started: now(),
                finished: String::new(),
                exit_code: 0,
                phases: Vec::new(),
                outputs: Vec::new(),
            },
            out: out.to_path_buf(),
        }
    }

    pub fn phase(&mut self, name: &str, seconds: f64) {
        match self.manifest.phases.iter_mut().find(|(n, _)| n == name) {
            Some((_, s)) => *s += seconds,
            None => self.manifest.phases.push((name.to_string(), seconds)),
        }
    }

    /// Writes `contents` to `name` inside the output directory.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::write(&path, e))?;
        self.record(name)?;
        Ok(path)
    }

    /// Registers a file already written inside the output directory.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        let bytes = std::fs::read(&path).map_err(|e| CliError::write(&path, e))?;
        self.manifest.outputs.push(OutputFile { path: name.to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(())
    }

    pub fn finish(mut self, exit_code: i32) -> Result<(), CliError> {
        self.manifest.finished = now();
        self.manifest.exit_code = exit_code;
        let path = self.out.join(MANIFEST);
        let mut line = serde_json::to_string(&self.manifest).expect("manifest serializes");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| CliError::write(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| CliError::write(&path, e))
    }
}

pub fn read_manifests(dir: &Path) -> Result<Vec<RunManifest>, CliError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingInput(path.display().to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::DataFormat(format!("{}: {e}", path.display()))))
        .collect()
}
