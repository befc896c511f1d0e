//! Simulated-annealing falsification of an STL requirement.
//!
//! The environment input is a piecewise-constant signal with `K` control
//! points over the horizon. When a reactive bound is supplied, every raw
//! input is projected onto `S_d(x(t))` at the state where it is applied.
//!
//! Evaluations form one deterministic stream: restarts happen every
//! `restart_period` evaluations regardless of the budget, so a larger budget
//! replays a smaller one as a prefix and can only lower the best robustness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::ReactiveBound;
use crate::qp::Polytope;
use crate::stl::{self, Formula, Predicates, StlError};
use crate::trace::{simulate, BoxLimits, Controller, Environment, SystemModel, Trace, TraceError};

#[derive(Debug, Error)]
pub enum FalsifyError {
    #[error("requirement horizon {needed} s exceeds the input horizon {available} s")]
    Horizon { needed: f64, available: f64 },
    #[error("invalid parameterization: {0}")]
    Config(String),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Piecewise-constant environment inputs, optionally with a searched initial
/// state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputParameterization {
    pub control_points: usize,
    pub horizon: f64,
    pub ranges: BoxLimits,
    /// Initial-state box; a degenerate box fixes the initial state.
    pub initial: BoxLimits,
}

impl InputParameterization {
    pub fn dim(&self) -> usize {
        self.control_points * self.ranges.dim() + self.initial.dim()
    }

    fn validate(&self) -> Result<(), FalsifyError> {
        if self.control_points == 0 {
            return Err(FalsifyError::Config("need at least one control point".into()));
        }
        let finite = |b: &BoxLimits| b.lo.iter().chain(&b.hi).all(|v| v.is_finite());
        if !finite(&self.ranges) || !finite(&self.initial) {
            return Err(FalsifyError::Config("ranges must be finite".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(FalsifyError::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    fn lo(&self, i: usize) -> f64 {
        let k = self.ranges.dim();
        let nd = self.control_points * k;
        if i < nd {
            self.ranges.lo[i % k]
        } else {
            self.initial.lo[i - nd]
        }
    }

    fn hi(&self, i: usize) -> f64 {
        let k = self.ranges.dim();
        let nd = self.control_points * k;
        if i < nd {
            self.ranges.hi[i % k]
        } else {
            self.initial.hi[i - nd]
        }
    }

    /// Uniform draw from the parameter box.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (lo, hi) = (self.lo(i), self.hi(i));
                if hi > lo {
                    rng.gen_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect()
    }

    pub fn initial_state<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.control_points * self.ranges.dim()..]
    }

    /// Input value at time `t`.
    pub fn value_at<'a>(&self, params: &'a [f64], t: f64) -> &'a [f64] {
        let k = self.ranges.dim();
        let idx = ((t / self.horizon * self.control_points as f64) + 1e-9).floor() as usize;
        let idx = idx.min(self.control_points - 1);
        &params[idx * k..(idx + 1) * k]
    }
}

/// Everything about the system under test except its inputs.
pub struct ClosedLoop<'a> {
    pub model: &'a dyn SystemModel,
    pub controller: &'a (dyn Fn() -> Box<dyn Controller> + Sync),
    pub spec: &'a Formula,
    pub predicates: &'a Predicates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealingConfig {
    pub restart_period: usize,
    /// Random samples drawn at the start of each restart.
    pub warmup: usize,
    pub decay: f64,
    /// Proposal standard deviation as a fraction of each range.
    pub sigma: f64,
    /// Stop at the first falsifying rollout.
    pub stop_on_falsified: bool,
}

impl Default for AnnealingConfig {
    fn default() -> Self {
        Self { restart_period: 200, warmup: 5, decay: 0.97, sigma: 0.1, stop_on_falsified: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsificationResult {
    pub falsified: bool,
    pub best_robustness: f64,
    pub best_params: Vec<f64>,
    pub best_trace: Option<Trace>,
    pub evaluations: usize,
    pub seed: u64,
    /// Rollouts rejected because the bound admitted no input at some state.
    pub empty_projections: usize,
}

/// Rolls out one parameter vector. Returns `None` when the bound is empty at
/// a visited state.
pub fn rollout(
    sys: &ClosedLoop<'_>,
    bound: Option<&ReactiveBound>,
    param: &InputParameterization,
    params: &[f64],
) -> Result<Option<Trace>, FalsifyError> {
    struct Env<'b> {
        param: &'b InputParameterization,
        params: &'b [f64],
        bound: Option<&'b ReactiveBound>,
        admissible: Polytope,
        empty: bool,
    }
    impl Environment for Env<'_> {
        fn disturbance(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>, String> {
            let mut d = self.param.value_at(self.params, t).to_vec();
            self.param.ranges.clamp(&mut d);
            if let Some(b) = self.bound {
                match b.project(x, &d, &self.admissible) {
                    Ok(p) => d = p,
                    Err(e) => {
                        self.empty = true;
                        return Err(e.to_string());
                    }
                }
            }
            Ok(d)
        }
    }
    let mut env = Env { param, params, bound, admissible: sys.model.admissible_disturbances(), empty: false };
    let mut ctrl = (sys.controller)();
    let x0 = param.initial_state(params).to_vec();
    match simulate(sys.model, ctrl.as_mut(), &mut env, &x0, param.horizon) {
        Ok(tr) => Ok(Some(tr)),
        Err(TraceError::Environment { .. }) if env.empty => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn score(sys: &ClosedLoop<'_>, trace: &Trace) -> Result<f64, FalsifyError> {
    Ok(stl::robustness(sys.spec, sys.predicates, trace, 0)?)
}

/// Searches for inputs violating the requirement within `budget` rollouts.
pub fn falsify(
    sys: &ClosedLoop<'_>,
    bound: Option<&ReactiveBound>,
    param: &InputParameterization,
    budget: usize,
    seed: u64,
    cfg: &AnnealingConfig,
) -> Result<FalsificationResult, FalsifyError> {
    param.validate()?;
    if budget == 0 {
        return Err(FalsifyError::Config("budget must be at least 1".into()));
    }
    let needed = sys.spec.horizon();
    if needed > param.horizon + 1e-9 {
        return Err(FalsifyError::Horizon { needed, available: param.horizon });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = param.dim();
    let widths: Vec<f64> = (0..dim).map(|i| param.hi(i) - param.lo(i)).collect();
    let unit = Normal::new(0.0, 1.0).expect("valid normal");

    let mut best = FalsificationResult {
        falsified: false,
        best_robustness: f64::INFINITY,
        best_params: param.sample(&mut rng.clone()),
        best_trace: None,
        evaluations: 0,
        seed,
        empty_projections: 0,
    };
    let evaluate = |p: &[f64], best: &mut FalsificationResult| -> Result<f64, FalsifyError> {
        best.evaluations += 1;
        let Some(tr) = rollout(sys, bound, param, p)? else {
            best.empty_projections += 1;
            return Ok(f64::INFINITY);
        };
        let rho = score(sys, &tr)?;
        if rho < best.best_robustness {
            best.best_robustness = rho;
            best.best_params = p.to_vec();
            best.best_trace = Some(tr);
        }
        Ok(rho)
    };

    let period = cfg.restart_period.max(cfg.warmup + 1);
    'outer: while best.evaluations < budget {
        // Restart: warm-up samples, then annealing from the best of them.
        let mut cur = Vec::new();
        let mut cur_rho = f64::INFINITY;
        let (mut lo_rho, mut hi_rho) = (f64::INFINITY, f64::NEG_INFINITY);
        let start = best.evaluations;
        for _ in 0..cfg.warmup.max(1) {
            if best.evaluations >= budget {
                break 'outer;
            }
            let p = param.sample(&mut rng);
            let rho = evaluate(&p, &mut best)?;
            if rho.is_finite() {
                lo_rho = lo_rho.min(rho);
                hi_rho = hi_rho.max(rho);
            }
            if rho < cur_rho || cur.is_empty() {
                cur = p;
                cur_rho = rho;
            }
            if cfg.stop_on_falsified && best.best_robustness < 0.0 {
                break 'outer;
            }
        }
        let mut temp = if hi_rho > lo_rho { hi_rho - lo_rho } else { 1e-3 };
        while best.evaluations < budget && best.evaluations - start < period {
            let prop: Vec<f64> = (0..dim)
                .map(|i| {
                    let v = cur[i] + cfg.sigma * widths[i] * unit.sample(&mut rng);
                    v.clamp(param.lo(i), param.hi(i))
                })
                .collect();
            let rho = evaluate(&prop, &mut best)?;
            let u: f64 = rng.gen();
            let accept = rho < cur_rho || (rho.is_finite() && u < (-(rho - cur_rho) / temp).exp());
            if accept {
                cur = prop;
                cur_rho = rho;
                temp *= cfg.decay;
            }
            if cfg.stop_on_falsified && best.best_robustness < 0.0 {
                break 'outer;
            }
        }
    }
    if let Some(tr) = &best.best_trace {
        best.falsified = best.best_robustness < 0.0 && !stl::satisfies(sys.spec, sys.predicates, tr, 0)?;
    }
    Ok(best)
}

/// Uniform random samples of the robustness landscape.
pub fn robustness_landscape(
    sys: &ClosedLoop<'_>,
    bound: Option<&ReactiveBound>,
    param: &InputParameterization,
    samples: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, f64)>, FalsifyError> {
    param.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let p = param.sample(&mut rng);
            let rho = match rollout(sys, bound, param, &p)? {
                Some(tr) => score(sys, &tr)?,
                None => f64::INFINITY,
            };
            Ok((p, rho))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse_formula;

    /// `ẋ = d − x` with `d ∈ [−1, 1]`.
    struct Leaky {
        x: BoxLimits,
        u: BoxLimits,
        d: BoxLimits,
    }

    impl SystemModel for Leaky {
        fn state_dim(&self) -> usize {
            1
        }
        fn control_dim(&self) -> usize {
            0
        }
        fn disturbance_dim(&self) -> usize {
            1
        }
        fn dt(&self) -> f64 {
            0.1
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
        fn derivative(&self, x: &[f64], _u: &[f64], d: &[f64]) -> Vec<f64> {
            vec![d[0] - x[0]]
        }
    }

    fn leaky() -> Leaky {
        Leaky { x: BoxLimits::symmetric(&[10.0]), u: BoxLimits::unbounded(0), d: BoxLimits::symmetric(&[1.0]) }
    }

    fn param() -> InputParameterization {
        InputParameterization {
            control_points: 5,
            horizon: 3.0,
            ranges: BoxLimits::symmetric(&[1.0]),
            initial: BoxLimits::new(vec![0.0], vec![0.0]),
        }
    }

    fn no_control() -> Box<dyn Controller> {
        Box::new(|_: &[f64], _: &[f64], _: f64| Vec::new())
    }

    fn run(spec: &str, budget: usize, seed: u64) -> FalsificationResult {
        let model = leaky();
        let f = parse_formula(spec).unwrap();
        let preds = Predicates::new()
            .bind("low", |s| s.x[0] + 1e9)
            .bind("high", |s| s.x[0] - 1e9)
            .bind("small", |s| 0.5 - s.x[0]);
        let sys = ClosedLoop { model: &model, controller: &no_control, spec: &f, predicates: &preds };
        falsify(&sys, None, &param(), budget, seed, &AnnealingConfig::default()).unwrap()
    }

    #[test]
    fn unfalsifiable_requirement() {
        let r = run("G[0,3] low", 50, 1);
        assert!(!r.falsified);
        assert!((r.best_robustness - 1e9).abs() < 10.0);
        assert_eq!(r.evaluations, 50);
    }

    #[test]
    fn unsatisfiable_requirement_fails_immediately() {
        let r = run("G[0,3] high", 50, 1);
        assert!(r.falsified);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn finds_a_push_past_threshold() {
        // Holding d = 1 drives x above 0.5 within the horizon.
        let r = run("G[0,3] small", 400, 3);
        assert!(r.falsified);
        let tr = r.best_trace.unwrap();
        assert!(tr.samples().iter().any(|s| s.x[0] > 0.5));
    }

    #[test]
    fn larger_budget_never_worse_and_deterministic() {
        let a = run("G[0,3] small", 30, 9);
        let mut cfg = AnnealingConfig::default();
        cfg.stop_on_falsified = false;
        let model = leaky();
        let f = parse_formula("G[0,3] small").unwrap();
        let preds = Predicates::new().bind("small", |s| 0.5 - s.x[0]);
        let sys = ClosedLoop { model: &model, controller: &no_control, spec: &f, predicates: &preds };
        let b1 = falsify(&sys, None, &param(), 20, 9, &cfg).unwrap();
        let b2 = falsify(&sys, None, &param(), 40, 9, &cfg).unwrap();
        assert!(b2.best_robustness <= b1.best_robustness);
        let again = run("G[0,3] small", 30, 9);
        assert_eq!(a.best_params, again.best_params);
    }

    #[test]
    fn horizon_longer_than_input_is_rejected() {
        let model = leaky();
        let f = parse_formula("G[0,5] small").unwrap();
        let preds = Predicates::new().bind("small", |s| 0.5 - s.x[0]);
        let sys = ClosedLoop { model: &model, controller: &no_control, spec: &f, predicates: &preds };
        assert!(matches!(
            falsify(&sys, None, &param(), 10, 0, &AnnealingConfig::default()),
            Err(FalsifyError::Horizon { .. })
        ));
    }

    #[test]
    fn landscape_sample_count() {
        let model = leaky();
        let f = parse_formula("G[0,3] small").unwrap();
        let preds = Predicates::new().bind("small", |s| 0.5 - s.x[0]);
        let sys = ClosedLoop { model: &model, controller: &no_control, spec: &f, predicates: &preds };
        let l = robustness_landscape(&sys, None, &param(), 17, 4).unwrap();
        assert_eq!(l.len(), 17);
        assert!(l.iter().all(|(_, r)| r.is_finite()));
    }
}
