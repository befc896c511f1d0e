//! Benchmark systems: the two-robot pursuit problem and the lane change.
//!
//! Each benchmark registers a model, a controller factory, the requirement
//! with its predicates, the falsifier's input parameterization, a learner
//! configuration and a snapshot selector, bundled as a [`Problem`].

pub mod lane_change;
pub mod mpc;
pub mod robot;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::falsify::{ClosedLoop, InputParameterization};
use crate::learn::LearnerConfig;
use crate::stl::{Formula, Predicates};
use crate::trace::{Controller, Snapshot, SnapshotSelector, SystemModel, Trace};

pub use lane_change::LaneChangeConfig;
pub use robot::RobotConfig;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown benchmark `{0}`")]
    Unknown(String),
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("cannot read configuration {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Simulation(#[from] crate::trace::TraceError),
}

pub type ControllerFactory = Box<dyn Fn() -> Box<dyn Controller> + Send + Sync>;

/// A registered benchmark, ready for falsification and learning.
pub struct Problem {
    pub name: String,
    pub model: Box<dyn SystemModel>,
    pub controller: ControllerFactory,
    pub spec: Formula,
    pub predicates: Predicates,
    pub input: InputParameterization,
    pub learner: LearnerConfig,
    pub selector: SnapshotSelector,
}

impl Problem {
    pub fn closed_loop(&self) -> ClosedLoop<'_> {
        ClosedLoop {
            model: self.model.as_ref(),
            controller: &*self.controller,
            spec: &self.spec,
            predicates: &self.predicates,
        }
    }
}

/// Benchmark configuration as read from a TOML file. The `benchmark` key
/// selects the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "benchmark", rename_all = "snake_case")]
pub enum BenchmarkConfig {
    Robot(RobotConfig),
    LaneChange(LaneChangeConfig),
}

pub const NAMES: [&str; 2] = ["robot", "lane_change"];

impl BenchmarkConfig {
    pub fn by_name(name: &str) -> Result<Self, BenchError> {
        match name {
            "robot" => Ok(Self::Robot(RobotConfig::default())),
            "lane_change" => Ok(Self::LaneChange(LaneChangeConfig::default())),
            "lane_change_no_avoidance" => {
                let mut c = LaneChangeConfig::default();
                c.mpc.collision_avoidance = false;
                Ok(Self::LaneChange(c))
            }
            other => Err(BenchError::Unknown(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Robot(_) => "robot",
            Self::LaneChange(_) => "lane_change",
        }
    }

    pub fn from_toml(text: &str, path: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Parse { path: path.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: p.clone(), source })?;
        Self::from_toml(&text, &p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("benchmark config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        match self {
            Self::Robot(c) => c.validate(),
            Self::LaneChange(c) => c.validate(),
        }
    }

    pub fn problem(&self) -> Result<Problem, BenchError> {
        self.validate()?;
        Ok(match self {
            Self::Robot(c) => robot::problem(c),
            Self::LaneChange(c) => lane_change::problem(c),
        })
    }

    /// Positive traces from the benchmark's data generator.
    pub fn generate_positive(&self, seed: u64, episodes: usize) -> Result<Vec<Trace>, BenchError> {
        match self {
            Self::Robot(c) => robot::generate_positive_data(c, seed, episodes),
            Self::LaneChange(c) => lane_change::generate_positive_data(c, seed, episodes),
        }
    }

    /// Snapshots taken from positive traces at the configured stride.
    pub fn positive_snapshots(&self, traces: &[Trace]) -> Vec<Snapshot> {
        let stride = match self {
            Self::Robot(c) => c.data.stride,
            Self::LaneChange(c) => c.data.stride,
        };
        thin_snapshots(traces, stride)
    }

    pub fn data_seed(&self) -> u64 {
        match self {
            Self::Robot(c) => c.data.seed,
            Self::LaneChange(c) => c.data.seed,
        }
    }

    pub fn episodes(&self) -> usize {
        match self {
            Self::Robot(c) => c.data.episodes,
            Self::LaneChange(c) => c.data.episodes,
        }
    }
}

/// Every `stride`-th sample of every trace as a positive snapshot.
pub fn thin_snapshots(traces: &[Trace], stride: usize) -> Vec<Snapshot> {
    traces
        .iter()
        .flat_map(|tr| {
            tr.samples()
                .iter()
                .step_by(stride.max(1))
                .map(|s| Snapshot::new(s.x.clone(), s.d.clone(), crate::trace::Label::Positive))
        })
        .collect()
}

/// `x` scaled to norm at most `a`.
pub fn saturate(v: [f64; 2], a: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n <= a * (1.0 + 1e-12) {
        v
    } else {
        [v[0] * a / n, v[1] * a / n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names() {
        for n in NAMES {
            assert_eq!(BenchmarkConfig::by_name(n).unwrap().name(), n);
        }
        assert!(matches!(BenchmarkConfig::by_name("nope"), Err(BenchError::Unknown(_))));
    }

    #[test]
    fn toml_round_trip() {
        for n in NAMES {
            let c = BenchmarkConfig::by_name(n).unwrap();
            let back = BenchmarkConfig::from_toml(&c.to_toml(), "inline").unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn saturation() {
        assert_eq!(saturate([0.3, 0.4], 1.0), [0.3, 0.4]);
        let s = saturate([3.0, 0.0], 1.0);
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1] == 0.0);
    }
}
