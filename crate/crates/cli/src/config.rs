//! Run configuration: one TOML file per invocation.
//!
//! ```toml
//! [benchmark]            # any benchmark config; `benchmark` selects it
//! benchmark = "robot"
//!
//! [loop]                 # verification loop settings
//! [falsify]              # budget, optional bound file, annealing
//! [learn]                # snapshot files and learner settings
//! [cert]                 # n, p, n_h, epsilon
//! [report]               # slice grid resolution and state
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rv_core::bench::{BenchmarkConfig, NAMES};
use rv_core::cegis::LoopConfig;
use rv_core::falsify::AnnealingConfig;
use rv_core::learn::LearnerConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkConfig>,
    #[serde(default, rename = "loop")]
    pub loop_cfg: LoopConfig,
    #[serde(default)]
    pub falsify: FalsifySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learn: Option<LearnSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cert: Option<CertSection>,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FalsifySection {
    pub budget: usize,
    /// Bound JSON restricting the environment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<PathBuf>,
    pub annealing: AnnealingConfig,
    /// Uniform samples for the landscape CSV; 0 skips it.
    pub landscape_samples: usize,
}

impl Default for FalsifySection {
    fn default() -> Self {
        Self { budget: 2000, bound: None, annealing: AnnealingConfig::default(), landscape_samples: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnSection {
    /// Snapshot CSV files with positive data.
    pub positives: Vec<PathBuf>,
    #[serde(default)]
    pub negatives: Vec<PathBuf>,
    /// Defaults to the benchmark's learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerConfig>,
    /// Fraction of positives tuning κ; the rest fit the hyperplanes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune_fraction: Option<f64>,
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertSection {
    pub n: usize,
    pub p: usize,
    #[serde(default = "one")]
    pub n_h: usize,
    pub epsilon: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Points per axis of the bound slice grid.
    pub grid: usize,
    /// State at which the bound is sliced; defaults to the benchmark's
    /// initial-state box center.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { grid: 41, x: None }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let shown = path.display();
        let value: toml::Value =
            toml::from_str(text).map_err(|e| CliError::DataFormat(format!("{shown}: {e}")))?;
        if let Some(name) = value.get("benchmark").and_then(|b| b.get("benchmark")).and_then(|n| n.as_str()) {
            if !NAMES.contains(&name) {
                return Err(CliError::Usage(format!("unknown benchmark `{name}` (known: {})", NAMES.join(", "))));
            }
        }
        let cfg: RunConfig = value.try_into().map_err(|e| CliError::DataFormat(format!("{shown}: {e}")))?;
        if let Some(b) = &cfg.benchmark {
            b.validate().map_err(|e| CliError::DataFormat(format!("{shown}: {e}")))?;
        }
        cfg.loop_cfg.validate().map_err(|e| CliError::DataFormat(format!("{shown}: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(path.display().to_string()),
            _ => CliError::Failed(format!("{}: {e}", path.display())),
        })?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn benchmark(&self) -> Result<&BenchmarkConfig, CliError> {
        self.benchmark.as_ref().ok_or_else(|| CliError::Usage("the config has no [benchmark] table".into()))
    }
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Parses `0,2,5` or `0-4` (inclusive) or a mix of both.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("invalid seed list `{text}`"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}
