//! Two-robot pursuit. R₁ is controlled and must stay within communication
//! range of R₂ while tracking a target T₁; R₂ is the environment.
//!
//! State `x = [p₁; p₂; p_T]`, control `u = v₁`, environment `d = [v₂; v_T]`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{saturate, BenchError, Problem};
use crate::falsify::InputParameterization;
use crate::learn::{FeatureMap, LearnerConfig, RegionFn};
use crate::qp::Polytope;
use crate::stl::{Formula, Predicates};
use crate::trace::{simulate, BoxLimits, Environment, Importance, SnapshotSelector, SystemModel, ThresholdRule, Trace};

/// Edges of the polygons standing in for the speed discs.
const DISC_EDGES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    /// Half-width of the square arena.
    pub arena: f64,
    pub v_max: f64,
    pub r_max: f64,
    pub k1: f64,
    pub k2: f64,
    /// Bound on `‖Δv₂‖`.
    pub noise: f64,
    /// Speed cap of the target.
    pub target_speed: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Initial `[p₁; p₂; p_T]` for falsification.
    pub initial: Vec<f64>,
    pub control_points: usize,
    pub data: RobotData,
    pub learner: LearnerConfig,
    pub selector: SnapshotSelector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotData {
    pub seed: u64,
    pub episodes: usize,
    /// Episode length in seconds.
    pub duration: f64,
    /// Keep every `stride`-th sample as a snapshot.
    pub stride: usize,
    /// Standard deviation of the target's velocity random walk per step.
    pub target_jitter: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        let r_max = 4.0;
        let mut learner = LearnerConfig::new(FeatureMap::Robot);
        learner.g = RegionFn::State(2);
        learner.n_h = 3;
        learner.gamma = 20.0;
        learner.kappa0 = 1.0;
        learner.iterations = 200;
        Self {
            arena: 10.0,
            v_max: 1.0,
            r_max,
            k1: 0.6,
            k2: 0.8,
            noise: 0.2,
            target_speed: 0.25,
            dt: 0.1,
            horizon: 20.0,
            initial: vec![0.0, 0.0, 0.0, 2.0, 0.0, 0.0],
            control_points: 10,
            data: RobotData { seed: 0, episodes: 100, duration: 10.0, stride: 1, target_jitter: 0.1 },
            learner,
            selector: SnapshotSelector {
                importance: Importance::Separation { first: [0, 1], second: [2, 3] },
                threshold: ThresholdRule::Absolute(0.8 * r_max),
                max_per_trace: 20,
                cutoff: Some(r_max),
            },
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let pos = [self.arena, self.v_max, self.r_max, self.dt, self.horizon, self.target_speed];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(BenchError::Config("arena, v_max, r_max, target_speed, dt and horizon must be positive".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(BenchError::Config("noise must be nonnegative".into()));
        }
        if self.initial.len() != 6 || self.initial.iter().any(|v| v.abs() > self.arena) {
            return Err(BenchError::Config("initial state must be six coordinates inside the arena".into()));
        }
        if self.control_points == 0 {
            return Err(BenchError::Config("control_points must be at least 1".into()));
        }
        Ok(())
    }
}

pub struct RobotModel {
    cfg: RobotConfig,
    x: BoxLimits,
    u: BoxLimits,
    d: BoxLimits,
}

impl RobotModel {
    pub fn new(cfg: &RobotConfig) -> Self {
        let (v, s) = (cfg.v_max, cfg.target_speed);
        Self {
            cfg: cfg.clone(),
            x: BoxLimits::symmetric(&[cfg.arena; 6]),
            u: BoxLimits::symmetric(&[v, v]),
            d: BoxLimits::symmetric(&[v, v, s, s]),
        }
    }
}

fn push_polygon(p: &mut Polytope, offset: usize, radius: f64) {
    let apothem = radius * (PI / DISC_EDGES as f64).cos();
    for j in 0..DISC_EDGES {
        let th = (2 * j + 1) as f64 * PI / DISC_EDGES as f64;
        let mut row = vec![0.0; 4];
        row[offset] = th.cos();
        row[offset + 1] = th.sin();
        p.push(row, apothem);
    }
}

impl SystemModel for RobotModel {
    fn state_dim(&self) -> usize {
        6
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn disturbance_dim(&self) -> usize {
        4
    }
    fn dt(&self) -> f64 {
        self.cfg.dt
    }
    fn state_limits(&self) -> &BoxLimits {
        &self.x
    }
    fn control_limits(&self) -> &BoxLimits {
        &self.u
    }
    fn disturbance_limits(&self) -> &BoxLimits {
        &self.d
    }

    fn derivative(&self, _x: &[f64], u: &[f64], d: &[f64]) -> Vec<f64> {
        vec![u[0], u[1], d[0], d[1], d[2], d[3]]
    }

    fn limit_disturbance(&self, _x: &[f64], d: &mut [f64]) {
        let v2 = saturate([d[0], d[1]], self.cfg.v_max);
        let vt = saturate([d[2], d[3]], self.cfg.target_speed);
        d.copy_from_slice(&[v2[0], v2[1], vt[0], vt[1]]);
    }

    /// Inscribed 16-gons of the two speed discs.
    fn admissible_disturbances(&self) -> Polytope {
        let mut p = Polytope::from_box(&self.d);
        push_polygon(&mut p, 0, self.cfg.v_max);
        push_polygon(&mut p, 2, self.cfg.target_speed);
        p
    }
}

/// `v₁ = sat(k₁(p_T − p₁) + k₂(p₂ − p₁))`.
pub fn controller_r1(x: &[f64], k1: f64, k2: f64, v_max: f64) -> [f64; 2] {
    let raw = [
        k1 * (x[4] - x[0]) + k2 * (x[2] - x[0]),
        k1 * (x[5] - x[1]) + k2 * (x[3] - x[1]),
    ];
    saturate(raw, v_max)
}

/// Spiral toward R₁: counter-clockwise for `p₂ₓ ≤ 0`, clockwise otherwise.
pub fn env_r2(x: &[f64], noise: [f64; 2], v_max: f64) -> [f64; 2] {
    let beta = if x[2] <= 0.0 { 1.0 } else { -1.0 };
    let (rx, ry) = (x[2] - x[0], x[3] - x[1]);
    saturate([-0.4 * rx - beta * ry + noise[0], beta * rx - 0.4 * ry + noise[1]], v_max)
}

pub fn spec(cfg: &RobotConfig) -> (Formula, Predicates) {
    let r_max = cfg.r_max;
    let preds = Predicates::new().bind("connected", move |s| r_max - (s.x[0] - s.x[2]).hypot(s.x[1] - s.x[3]));
    let f = Formula::always(0.0, cfg.horizon, Formula::pred("connected")).expect("valid interval");
    (f, preds)
}

pub fn problem(cfg: &RobotConfig) -> Problem {
    let (spec, predicates) = spec(cfg);
    let (k1, k2, v) = (cfg.k1, cfg.k2, cfg.v_max);
    let model = RobotModel::new(cfg);
    let input = InputParameterization {
        control_points: cfg.control_points,
        horizon: cfg.horizon,
        ranges: model.d.clone(),
        initial: BoxLimits::new(cfg.initial.clone(), cfg.initial.clone()),
    };
    Problem {
        name: "robot".into(),
        model: Box::new(model),
        controller: Box::new(move || {
            Box::new(move |x: &[f64], _d: &[f64], _t: f64| controller_r1(x, k1, k2, v).to_vec())
        }),
        spec,
        predicates,
        input,
        learner: cfg.learner.clone(),
        selector: cfg.selector.clone(),
    }
}

/// R₂ following its spiral law with bounded noise, and a target doing a
/// random walk in velocity.
struct DataEnv<'a> {
    cfg: &'a RobotConfig,
    rng: &'a mut ChaCha8Rng,
    vt: [f64; 2],
}

impl Environment for DataEnv<'_> {
    fn disturbance(&mut self, x: &[f64], _t: f64) -> Result<Vec<f64>, String> {
        let r = self.cfg.noise * self.rng.gen::<f64>().sqrt();
        let th = self.rng.gen_range(0.0..2.0 * PI);
        let v2 = env_r2(x, [r * th.cos(), r * th.sin()], self.cfg.v_max);
        let jitter = Normal::new(0.0, self.cfg.data.target_jitter.max(1e-12)).expect("valid jitter");
        let vt = [self.vt[0] + jitter.sample(self.rng), self.vt[1] + jitter.sample(self.rng)];
        self.vt = saturate(vt, self.cfg.target_speed);
        Ok(vec![v2[0], v2[1], self.vt[0], self.vt[1]])
    }
}

/// Simulates `episodes` closed-loop runs with R₂ obeying its spiral law.
pub fn generate_positive_data(cfg: &RobotConfig, seed: u64, episodes: usize) -> Result<Vec<Trace>, BenchError> {
    cfg.validate()?;
    let model = RobotModel::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = 0.6 * cfg.arena;
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let p1 = [rng.gen_range(-inner..inner), rng.gen_range(-inner..inner)];
        let r = rng.gen_range(0.5..0.9 * cfg.r_max);
        let th = rng.gen_range(0.0..2.0 * PI);
        let pt = [p1[0] + rng.gen_range(-2.0..2.0), p1[1] + rng.gen_range(-2.0..2.0)];
        let x0 = [p1[0], p1[1], p1[0] + r * th.cos(), p1[1] + r * th.sin(), pt[0], pt[1]];
        let vt = saturate([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], cfg.target_speed);
        let mut env = DataEnv { cfg, rng: &mut rng, vt };
        let (k1, k2, v) = (cfg.k1, cfg.k2, cfg.v_max);
        let mut ctrl = move |x: &[f64], _d: &[f64], _t: f64| controller_r1(x, k1, k2, v).to_vec();
        out.push(simulate(&model, &mut ctrl, &mut env, &x0, cfg.data.duration)?);
    }
    Ok(out)
}
