//! Discrete-time Signal Temporal Logic.
//!
//! Predicates are named scalar functions of a trace sample, `p ≜ f(σ(t)) > 0`.
//! Intervals are given in seconds and mapped onto sample windows
//! `[⌊a/dt⌋, ⌈b/dt⌉]`.
//!
//! Grammar accepted by [`parse_formula`]:
//!
//! ```text
//! formula  := or
//! or       := and ( '|' and )*
//! and      := until ( '&' until )*
//! until    := unary ( 'U' interval until )?
//! unary    := '!' unary | 'G' interval unary | 'F' interval unary | atom
//! atom     := 'true' | ident | '(' formula ')'
//! interval := '[' number ',' number ']'
//! ident    := [A-Za-z_][A-Za-z0-9_]*
//! ```

mod parse;

pub use parse::{parse_formula, ParseError};

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Sample, Trace};

#[derive(Debug, Error)]
pub enum StlError {
    #[error("formula needs samples up to index {needed} but the trace ends at {last}")]
    HorizonExceedsTrace { needed: usize, last: usize },
    #[error("predicate `{0}` is not bound")]
    UnknownPredicate(String),
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self, StlError> {
        if a.is_finite() && b.is_finite() && 0.0 <= a && a <= b {
            Ok(Self { a, b })
        } else {
            Err(StlError::InvalidInterval { a, b })
        }
    }

    /// Sample-index window `(lo, hi)` for period `dt`.
    pub fn window(&self, dt: f64) -> (usize, usize) {
        let lo = (self.a / dt + 1e-9).floor() as usize;
        let hi = (self.b / dt - 1e-9).ceil().max(0.0) as usize;
        (lo, hi.max(lo))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    Pred(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
}

impl Formula {
    pub fn pred(name: &str) -> Self {
        Formula::Pred(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(a: f64, b: f64, lhs: Formula, rhs: Formula) -> Result<Self, StlError> {
        Ok(Formula::Until(Interval::new(a, b)?, Box::new(lhs), Box::new(rhs)))
    }

    pub fn eventually(a: f64, b: f64, f: Formula) -> Result<Self, StlError> {
        Ok(Formula::Eventually(Interval::new(a, b)?, Box::new(f)))
    }

    pub fn always(a: f64, b: f64, f: Formula) -> Result<Self, StlError> {
        Ok(Formula::Always(Interval::new(a, b)?, Box::new(f)))
    }

    /// Trace duration beyond `t` needed for evaluation, in seconds.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::True | Formula::Pred(_) => 0.0,
            Formula::Not(f) => f.horizon(),
            Formula::And(a, b) | Formula::Or(a, b) => a.horizon().max(b.horizon()),
            Formula::Until(i, a, b) => i.b + a.horizon().max(b.horizon()),
            Formula::Eventually(i, f) | Formula::Always(i, f) => i.b + f.horizon(),
        }
    }

    /// Same as [`Formula::horizon`] counted in samples at period `dt`.
    pub fn horizon_steps(&self, dt: f64) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 0,
            Formula::Not(f) => f.horizon_steps(dt),
            Formula::And(a, b) | Formula::Or(a, b) => a.horizon_steps(dt).max(b.horizon_steps(dt)),
            Formula::Until(i, a, b) => i.window(dt).1 + a.horizon_steps(dt).max(b.horizon_steps(dt)),
            Formula::Eventually(i, f) | Formula::Always(i, f) => i.window(dt).1 + f.horizon_steps(dt),
        }
    }

    pub fn predicates(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_predicates<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::True => {}
            Formula::Pred(p) => out.push(p),
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => {
                f.collect_predicates(out)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.collect_predicates(out);
                b.collect_predicates(out);
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Not(x) => write!(f, "!{x}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(i, a, b) => write!(f, "({a} U[{},{}] {b})", i.a, i.b),
            Formula::Eventually(i, x) => write!(f, "F[{},{}]{x}", i.a, i.b),
            Formula::Always(i, x) => write!(f, "G[{},{}]{x}", i.a, i.b),
        }
    }
}

type PredFn = dyn Fn(&Sample) -> f64 + Send + Sync;

/// Binds predicate names to scalar functions of a sample.
#[derive(Clone, Default)]
pub struct Predicates {
    map: HashMap<String, Arc<PredFn>>,
}

impl fmt::Debug for Predicates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.map.keys().collect();
        names.sort();
        f.debug_struct("Predicates").field("names", &names).finish()
    }
}

impl Predicates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&Sample) -> f64 + Send + Sync + 'static,
    {
        self.map.insert(name.to_string(), Arc::new(f));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Arc<PredFn>> {
        self.map.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }
}

/// Result of a combined evaluation. `satisfied` follows the robustness
/// sign with ties counted as satisfied; `marginal` flags those ties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub robustness: f64,
    pub satisfied: bool,
    pub marginal: bool,
}

fn check(formula: &Formula, preds: &Predicates, trace: &Trace, t: usize) -> Result<(), StlError> {
    if let Some(p) = formula.predicates().into_iter().find(|p| !preds.contains(p)) {
        return Err(StlError::UnknownPredicate(p.to_string()));
    }
    let needed = t + formula.horizon_steps(trace.dt());
    if needed >= trace.len() {
        return Err(StlError::HorizonExceedsTrace { needed, last: trace.len() - 1 });
    }
    Ok(())
}

/// Quantitative semantics at sample `t`.
pub fn robustness(formula: &Formula, preds: &Predicates, trace: &Trace, t: usize) -> Result<f64, StlError> {
    check(formula, preds, trace, t)?;
    Ok(robustness_signal(formula, preds, trace)[t])
}

/// Boolean semantics at sample `t`.
pub fn satisfies(formula: &Formula, preds: &Predicates, trace: &Trace, t: usize) -> Result<bool, StlError> {
    check(formula, preds, trace, t)?;
    Ok(boolean_signal(formula, preds, trace)[t])
}

pub fn evaluate(formula: &Formula, preds: &Predicates, trace: &Trace, t: usize) -> Result<Evaluation, StlError> {
    let rho = robustness(formula, preds, trace, t)?;
    Ok(Evaluation { robustness: rho, satisfied: rho >= 0.0, marginal: rho == 0.0 })
}

/// Robustness at every sample. Entries whose windows run past the end of
/// the trace are computed on the truncated window and are not meaningful.
pub fn robustness_signal(formula: &Formula, preds: &Predicates, trace: &Trace) -> Vec<f64> {
    let len = trace.len();
    let dt = trace.dt();
    match formula {
        Formula::True => vec![f64::INFINITY; len],
        Formula::Pred(p) => {
            let f = preds.get(p).expect("predicate checked before evaluation");
            trace.samples().iter().map(|s| f(s)).collect()
        }
        Formula::Not(x) => robustness_signal(x, preds, trace).into_iter().map(|v| -v).collect(),
        Formula::And(a, b) => zip_with(robustness_signal(a, preds, trace), robustness_signal(b, preds, trace), f64::min),
        Formula::Or(a, b) => zip_with(robustness_signal(a, preds, trace), robustness_signal(b, preds, trace), f64::max),
        Formula::Eventually(i, x) => {
            window_fold(&robustness_signal(x, preds, trace), i.window(dt), f64::NEG_INFINITY, f64::max)
        }
        Formula::Always(i, x) => {
            window_fold(&robustness_signal(x, preds, trace), i.window(dt), f64::INFINITY, f64::min)
        }
        Formula::Until(i, a, b) => {
            let ra = robustness_signal(a, preds, trace);
            let rb = robustness_signal(b, preds, trace);
            let (lo, hi) = i.window(dt);
            (0..len)
                .map(|t| {
                    let mut best = f64::NEG_INFINITY;
                    let mut run = f64::INFINITY;
                    for tau in t..=(t + hi).min(len - 1) {
                        run = run.min(ra[tau]);
                        if tau >= t + lo {
                            best = best.max(rb[tau].min(run));
                        }
                    }
                    best
                })
                .collect()
        }
    }
}

/// Boolean satisfaction at every sample, same truncation caveat as
/// [`robustness_signal`].
pub fn boolean_signal(formula: &Formula, preds: &Predicates, trace: &Trace) -> Vec<bool> {
    let len = trace.len();
    let dt = trace.dt();
    let windowed = |sig: Vec<bool>, (lo, hi): (usize, usize), any: bool| -> Vec<bool> {
        (0..len)
            .map(|t| {
                let range = (t + lo).min(len)..=(t + hi).min(len - 1);
                let mut it = sig[range].iter();
                if any {
                    it.any(|&v| v)
                } else {
                    it.all(|&v| v)
                }
            })
            .collect()
    };
    match formula {
        Formula::True => vec![true; len],
        Formula::Pred(p) => {
            let f = preds.get(p).expect("predicate checked before evaluation");
            trace.samples().iter().map(|s| f(s) > 0.0).collect()
        }
        Formula::Not(x) => boolean_signal(x, preds, trace).into_iter().map(|v| !v).collect(),
        Formula::And(a, b) => zip_with(boolean_signal(a, preds, trace), boolean_signal(b, preds, trace), |x, y| x && y),
        Formula::Or(a, b) => zip_with(boolean_signal(a, preds, trace), boolean_signal(b, preds, trace), |x, y| x || y),
        Formula::Eventually(i, x) => windowed(boolean_signal(x, preds, trace), i.window(dt), true),
        Formula::Always(i, x) => windowed(boolean_signal(x, preds, trace), i.window(dt), false),
        Formula::Until(i, a, b) => {
            let sa = boolean_signal(a, preds, trace);
            let sb = boolean_signal(b, preds, trace);
            let (lo, hi) = i.window(dt);
            (0..len)
                .map(|t| {
                    (t + lo..=(t + hi).min(len - 1))
                        .any(|tau| sb[tau] && (t..=tau).all(|tp| sa[tp]))
                })
                .collect()
        }
    }
}

fn zip_with<T: Copy>(a: Vec<T>, b: Vec<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

fn window_fold(sig: &[f64], (lo, hi): (usize, usize), init: f64, f: fn(f64, f64) -> f64) -> Vec<f64> {
    let len = sig.len();
    (0..len)
        .map(|t| {
            if t + lo >= len {
                return init;
            }
            sig[t + lo..=(t + hi).min(len - 1)].iter().copied().fold(init, f)
        })
        .collect()
}
