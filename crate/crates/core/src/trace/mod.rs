//! Runs of a discrete-time system `x⁺ = f(x, u, d)` and the data extracted
//! from them.

mod io;
mod snapshot;

pub use io::{load_snapshots, load_traces, save_snapshots, save_traces, TraceSchema};
pub use snapshot::{extract_snapshots, Importance, Label, Snapshot, SnapshotSelector, ThresholdRule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("policy returned a vector of length {got}, expected {expected} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite state at step {step}: {state:?}")]
    NonFinite { step: usize, state: Vec<f64> },
    #[error("environment policy failed at t = {t}: {message}")]
    Environment { t: f64, message: String },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("malformed row {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("missing header")]
    MissingHeader,
    #[error("cannot write non-finite value {value} in trace {trace}, sample {sample}")]
    NonFiniteWrite {
        trace: usize,
        sample: usize,
        value: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-component interval limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxLimits {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxLimits {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box limit dimensions differ");
        assert!(
            lo.iter().zip(&hi).all(|(l, h)| l <= h),
            "box lower limit exceeds upper limit"
        );
        Self { lo, hi }
    }

    pub fn symmetric(half_widths: &[f64]) -> Self {
        Self::new(half_widths.iter().map(|w| -w).collect(), half_widths.to_vec())
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::new(vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp(&self, v: &mut [f64]) {
        for ((vi, lo), hi) in v.iter_mut().zip(&self.lo).zip(&self.hi) {
            *vi = vi.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((vi, lo), hi)| *vi >= lo - tol && *vi <= hi + tol)
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }
}

/// A plant model. Implementors provide the continuous-time vector field; the
/// default [`SystemModel::step`] advances it with explicit Euler.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;
    /// Sample period in seconds.
    fn dt(&self) -> f64;
    fn state_limits(&self) -> &BoxLimits;
    fn control_limits(&self) -> &BoxLimits;
    fn disturbance_limits(&self) -> &BoxLimits;

    fn derivative(&self, x: &[f64], u: &[f64], d: &[f64]) -> Vec<f64>;

    /// Physical admissibility beyond the box, e.g. norm bounds. Must be a
    /// no-op on points of [`SystemModel::admissible_disturbances`].
    fn limit_disturbance(&self, _x: &[f64], _d: &mut [f64]) {}

    /// Linear description `{d | A d ≤ b}` of admissible disturbances, used
    /// when projecting onto a learned bound.
    fn admissible_disturbances(&self) -> crate::qp::Polytope {
        crate::qp::Polytope::from_box(self.disturbance_limits())
    }

    fn step(&self, x: &[f64], u: &[f64], d: &[f64], dt: f64) -> Vec<f64> {
        let dx = self.derivative(x, u, d);
        let mut next: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + dt * di).collect();
        self.state_limits().clamp(&mut next);
        next
    }
}

/// Closed-loop control law. Receives the current environment input, which
/// the controller is assumed to measure.
pub trait Controller {
    fn control(&mut self, x: &[f64], d: &[f64], t: f64) -> Vec<f64>;
}

/// Environment input policy.
pub trait Environment {
    fn disturbance(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>, String>;
}

impl<F> Controller for F
where
    F: FnMut(&[f64], &[f64], f64) -> Vec<f64>,
{
    fn control(&mut self, x: &[f64], d: &[f64], t: f64) -> Vec<f64> {
        self(x, d, t)
    }
}

/// Wraps a closure as an [`Environment`].
pub struct EnvFn<F>(pub F);

impl<F> Environment for EnvFn<F>
where
    F: FnMut(&[f64], f64) -> Vec<f64>,
{
    fn disturbance(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>, String> {
        Ok((self.0)(x, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
}

/// A fixed-step run `σ_t = (x(t), u(t), d(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    dt: f64,
    samples: Vec<Sample>,
}

impl Trace {
    pub fn new(dt: f64, samples: Vec<Sample>) -> Result<Self, TraceError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TraceError::Invalid(format!("dt must be positive, got {dt}")));
        }
        let first = samples
            .first()
            .ok_or_else(|| TraceError::Invalid("a trace needs at least one sample".into()))?;
        let (n, m, k) = (first.x.len(), first.u.len(), first.d.len());
        if let Some(i) = samples
            .iter()
            .position(|s| s.x.len() != n || s.u.len() != m || s.d.len() != k)
        {
            return Err(TraceError::Invalid(format!(
                "sample {i} has inconsistent dimensions"
            )));
        }
        Ok(Self { dt, samples })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = &self.samples[0];
        (s.x.len(), s.u.len(), s.d.len())
    }

    /// Duration covered, `(len - 1) · dt`.
    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// Largest one-step Euler residual against `model`, for traces whose
    /// states were not clamped.
    pub fn max_step_residual(&self, model: &dyn SystemModel) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let pred = model.step(&w[0].x, &w[0].u, &w[0].d, self.dt);
                pred.iter()
                    .zip(&w[1].x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Runs the closed loop for `horizon` seconds and returns `⌈horizon/dt⌉ + 1`
/// samples. The environment input is clamped to the disturbance box and the
/// model's admissible set before the controller sees it.
pub fn simulate(
    model: &dyn SystemModel,
    controller: &mut dyn Controller,
    env: &mut dyn Environment,
    x0: &[f64],
    horizon: f64,
) -> Result<Trace, TraceError> {
    let dt = model.dt();
    if x0.len() != model.state_dim() {
        return Err(TraceError::DimensionMismatch {
            what: "initial state",
            expected: model.state_dim(),
            got: x0.len(),
        });
    }
    let steps = steps_for(horizon, dt);
    let mut x = x0.to_vec();
    model.state_limits().clamp(&mut x);
    let mut samples = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = i as f64 * dt;
        let mut d = env
            .disturbance(&x, t)
            .map_err(|message| TraceError::Environment { t, message })?;
        if d.len() != model.disturbance_dim() {
            return Err(TraceError::DimensionMismatch {
                what: "environment",
                expected: model.disturbance_dim(),
                got: d.len(),
            });
        }
        model.disturbance_limits().clamp(&mut d);
        model.limit_disturbance(&x, &mut d);
        let mut u = controller.control(&x, &d, t);
        if u.len() != model.control_dim() {
            return Err(TraceError::DimensionMismatch {
                what: "controller",
                expected: model.control_dim(),
                got: u.len(),
            });
        }
        model.control_limits().clamp(&mut u);
        let next = (i < steps).then(|| model.step(&x, &u, &d, dt));
        samples.push(Sample { x, u, d });
        match next {
            Some(nx) if nx.iter().all(|v| v.is_finite()) => x = nx,
            Some(nx) => return Err(TraceError::NonFinite { step: i + 1, state: nx }),
            None => break,
        }
    }
    Trace::new(dt, samples)
}

/// Number of steps needed to cover `horizon` at period `dt`.
pub fn steps_for(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(0.0) as usize
}
