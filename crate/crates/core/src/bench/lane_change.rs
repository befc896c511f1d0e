//! Lane change in front of a human-driven vehicle (HV) approaching from
//! behind in the target lane.
//!
//! State `x = [ΔX, ΔY, Δv, ψ]` with `ΔX = X_AV − X_HV` and `ΔY` measured
//! from the target-lane center, control `u = [a₁, r₁]`, environment
//! `d = [a₂]`. The autonomous vehicle (AV) starts in the origin lane at
//! `ΔY = −w`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mpc::{MpcController, MpcParams};
use super::{BenchError, Problem};
use crate::falsify::InputParameterization;
use crate::learn::{FeatureMap, LearnerConfig};
use crate::stl::{Formula, Predicates};
use crate::trace::{simulate, BoxLimits, Environment, Importance, SnapshotSelector, SystemModel, ThresholdRule, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChangeConfig {
    /// Completion tolerance on `|ΔY|`.
    pub eps_lc: f64,
    pub horizon: f64,
    pub a2_max: f64,
    /// Initial `[ΔX, ΔY, Δv, ψ]` for falsification.
    pub initial: Vec<f64>,
    pub control_points: usize,
    /// Car geometry, speed, time step and input limits live here.
    pub mpc: MpcParams,
    pub data: LaneChangeData,
    pub learner: LearnerConfig,
    pub selector: SnapshotSelector,
}

/// Synthetic car-following driver used as positive data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChangeData {
    pub seed: u64,
    pub episodes: usize,
    pub stride: usize,
    /// `a₂ ← gap_gain·(ΔX − gap) + speed_gain·Δv + noise`.
    pub gap_gain: f64,
    pub gap: f64,
    pub speed_gain: f64,
    pub noise: f64,
    /// Bound on `|ȧ₂|`.
    pub jerk: f64,
    pub a2_min: f64,
    pub a2_max: f64,
    pub dx_range: [f64; 2],
    pub dv_range: [f64; 2],
}

impl Default for LaneChangeConfig {
    fn default() -> Self {
        let mpc = MpcParams::default();
        let mut learner = LearnerConfig::new(FeatureMap::LaneChange);
        learner.n_h = 2;
        Self {
            eps_lc: 0.2,
            horizon: 8.0,
            a2_max: 4.0,
            initial: vec![5.0, -mpc.w, -2.0, 0.0],
            control_points: 10,
            data: LaneChangeData {
                seed: 0,
                episodes: 30,
                stride: 1,
                gap_gain: 0.15,
                gap: 12.0,
                speed_gain: 0.4,
                noise: 0.3,
                jerk: 2.0,
                a2_min: -4.0,
                a2_max: 2.0,
                dx_range: [2.0, 25.0],
                dv_range: [-4.0, 3.0],
            },
            learner,
            selector: SnapshotSelector {
                importance: Importance::Uniform,
                threshold: ThresholdRule::Absolute(f64::NEG_INFINITY),
                max_per_trace: 20,
                cutoff: None,
            },
            mpc,
        }
    }
}

impl LaneChangeConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let m = &self.mpc;
        let pos = [m.a, m.b, m.w, self.eps_lc, m.tau, self.horizon, m.dt, m.v1, self.a2_max];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(BenchError::Config("a, b, w, eps_lc, tau, horizon, dt, v1 and a2_max must be positive".into()));
        }
        if m.steps == 0 || self.control_points == 0 {
            return Err(BenchError::Config("MPC steps and control points must be at least 1".into()));
        }
        if self.initial.len() != 4 {
            return Err(BenchError::Config("initial state has four components".into()));
        }
        if !(m.a1_min < m.a1_max) || !(m.r1_max > 0.0) {
            return Err(BenchError::Config("input limits are empty".into()));
        }
        Ok(())
    }

    pub fn lane_keeping(&self) -> (f64, f64) {
        (-1.5 * self.mpc.w + 0.5 * self.mpc.a, 0.5 * self.mpc.w - 0.5 * self.mpc.a)
    }
}

pub struct LaneChangeModel {
    v1: f64,
    dt: f64,
    x: BoxLimits,
    u: BoxLimits,
    d: BoxLimits,
}

impl LaneChangeModel {
    pub fn new(cfg: &LaneChangeConfig) -> Self {
        let m = &cfg.mpc;
        Self {
            v1: m.v1,
            dt: m.dt,
            x: BoxLimits::new(vec![-200.0, -20.0, -40.0, -1.0], vec![200.0, 20.0, 40.0, 1.0]),
            u: BoxLimits::new(vec![m.a1_min, -m.r1_max], vec![m.a1_max, m.r1_max]),
            d: BoxLimits::symmetric(&[cfg.a2_max]),
        }
    }
}

impl SystemModel for LaneChangeModel {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn disturbance_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> f64 {
        self.dt
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

    fn derivative(&self, x: &[f64], u: &[f64], d: &[f64]) -> Vec<f64> {
        vec![x[2], self.v1 * x[3].sin(), u[0] - d[0], u[1]]
    }
}

/// `G[0,T](¬COL ∧ LK) ∧ F[0,T] LC`.
pub fn spec(cfg: &LaneChangeConfig) -> (Formula, Predicates) {
    let (a, b, eps) = (cfg.mpc.a, cfg.mpc.b, cfg.eps_lc);
    let (lo, hi) = cfg.lane_keeping();
    let preds = Predicates::new()
        .bind("col", move |s| (a - s.x[1].abs()).min(b - s.x[0].abs()))
        .bind("lc", move |s| eps - s.x[1].abs())
        .bind("lk", move |s| (hi - s.x[1]).min(s.x[1] - lo));
    let t = cfg.horizon;
    let safe = Formula::always(0.0, t, Formula::and(Formula::not(Formula::pred("col")), Formula::pred("lk")))
        .expect("valid interval");
    let done = Formula::eventually(0.0, t, Formula::pred("lc")).expect("valid interval");
    (Formula::and(safe, done), preds)
}

/// True when the state is in collision.
pub fn collides(cfg: &LaneChangeConfig, x: &[f64]) -> bool {
    x[1].abs() <= cfg.mpc.a && x[0].abs() <= cfg.mpc.b
}

pub fn problem(cfg: &LaneChangeConfig) -> Problem {
    let (spec, predicates) = spec(cfg);
    let model = LaneChangeModel::new(cfg);
    let input = InputParameterization {
        control_points: cfg.control_points,
        horizon: cfg.horizon,
        ranges: model.d.clone(),
        initial: BoxLimits::new(cfg.initial.clone(), cfg.initial.clone()),
    };
    let params = cfg.mpc.clone();
    let name = if cfg.mpc.collision_avoidance { "lane_change" } else { "lane_change_no_avoidance" };
    Problem {
        name: name.into(),
        model: Box::new(model),
        controller: Box::new(move || Box::new(MpcController::new(params.clone()))),
        spec,
        predicates,
        input,
        learner: cfg.learner.clone(),
        selector: cfg.selector.clone(),
    }
}

/// Mild car-following with bounded jerk.
pub struct FollowingDriver<'a> {
    pub data: &'a LaneChangeData,
    pub dt: f64,
    pub rng: ChaCha8Rng,
    pub a2: f64,
}

impl FollowingDriver<'_> {
    pub fn target(&self, x: &[f64]) -> f64 {
        self.data.gap_gain * (x[0] - self.data.gap) + self.data.speed_gain * x[2]
    }
}

impl Environment for FollowingDriver<'_> {
    fn disturbance(&mut self, x: &[f64], _t: f64) -> Result<Vec<f64>, String> {
        let noise = Normal::new(0.0, self.data.noise.max(1e-12)).expect("valid noise");
        let want = self.target(x) + noise.sample(&mut self.rng);
        let max_step = self.data.jerk * self.dt;
        self.a2 = (self.a2 + (want - self.a2).clamp(-max_step, max_step)).clamp(self.data.a2_min, self.data.a2_max);
        Ok(vec![self.a2])
    }
}

/// Closed-loop runs of the MPC against the car-following driver from
/// randomized initial gaps and speed differences.
pub fn generate_positive_data(cfg: &LaneChangeConfig, seed: u64, episodes: usize) -> Result<Vec<Trace>, BenchError> {
    cfg.validate()?;
    let model = LaneChangeModel::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = &cfg.data;
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let x0 = [
            rng.gen_range(d.dx_range[0]..=d.dx_range[1]),
            -cfg.mpc.w + rng.gen_range(-0.3..=0.3),
            rng.gen_range(d.dv_range[0]..=d.dv_range[1]),
            0.0,
        ];
        let mut env = FollowingDriver {
            data: d,
            dt: cfg.mpc.dt,
            rng: ChaCha8Rng::seed_from_u64(rng.gen()),
            a2: rng.gen_range(-1.0..=1.0),
        };
        let mut ctrl = MpcController::new(cfg.mpc.clone());
        out.push(simulate(&model, &mut ctrl, &mut env, &x0, cfg.horizon)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl;
    use crate::trace::Sample;

    fn constant(x: [f64; 4]) -> Trace {
        let samples = (0..41).map(|_| Sample { x: x.to_vec(), u: vec![0.0; 2], d: vec![0.0] }).collect();
        Trace::new(0.2, samples).unwrap()
    }

    #[test]
    fn predicates_match_their_sets() {
        let cfg = LaneChangeConfig::default();
        let (_, preds) = spec(&cfg);
        let s = |x: [f64; 4]| Sample { x: x.to_vec(), u: vec![0.0; 2], d: vec![0.0] };
        let col = preds.get("col").unwrap();
        let lc = preds.get("lc").unwrap();
        let lk = preds.get("lk").unwrap();
        assert!(lc(&s([30.0, 0.1, 0.0, 0.0])) > 0.0);
        assert!(lc(&s([30.0, 0.3, 0.0, 0.0])) < 0.0);
        assert!(col(&s([3.0, -1.0, 0.0, 0.0])) > 0.0);
        assert!(col(&s([5.0, -1.0, 0.0, 0.0])) < 0.0);
        assert!(lk(&s([5.0, 1.0, 0.0, 0.0])) < 0.0);
        assert!(lk(&s([5.0, -3.7, 0.0, 0.0])) > 0.0);
        assert!(collides(&cfg, &[3.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn completed_lane_change_far_ahead_satisfies() {
        let cfg = LaneChangeConfig::default();
        let (f, preds) = spec(&cfg);
        assert!(stl::satisfies(&f, &preds, &constant([30.0, 0.0, 0.0, 0.0]), 0).unwrap());
        assert!(!stl::satisfies(&f, &preds, &constant([30.0, -3.7, 0.0, 0.0]), 0).unwrap());
        assert_eq!(f.horizon(), cfg.horizon);
    }

    #[test]
    fn lane_change_completes_against_a_decelerating_hv() {
        let cfg = LaneChangeConfig::default();
        let p = problem(&cfg);
        let mut ctrl = (p.controller)();
        let mut env = crate::trace::EnvFn(|_: &[f64], _: f64| vec![-1.0]);
        let tr = simulate(p.model.as_ref(), ctrl.as_mut(), &mut env, &[-15.0, -3.7, 0.0, 0.0], cfg.horizon).unwrap();
        let tr2 = simulate(p.model.as_ref(), (p.controller)().as_mut(), &mut env, &[12.0, -3.7, 0.0, 0.0], cfg.horizon).unwrap();
        assert!(stl::satisfies(&p.spec, &p.predicates, &tr2, 0).unwrap(), "{:?}", tr2.samples().last());
        // Starting behind the HV, the AV waits until it is ahead.
        assert!(tr.samples().iter().all(|s| !collides(&cfg, &s.x)));
    }

    #[test]
    fn generated_data_is_bounded_and_reproducible() {
        let cfg = LaneChangeConfig::default();
        let a = generate_positive_data(&cfg, 5, 3).unwrap();
        assert_eq!(a, generate_positive_data(&cfg, 5, 3).unwrap());
        for tr in &a {
            for s in tr.samples() {
                assert!(s.d[0] >= cfg.data.a2_min && s.d[0] <= cfg.data.a2_max);
            }
        }
    }
}
