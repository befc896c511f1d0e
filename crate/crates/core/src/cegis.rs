//! Counter-example guided verification: falsify under the current bound,
//! turn the counter-example into negative snapshots, relearn, repeat.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bench::Problem;
use crate::falsify::{falsify, AnnealingConfig, FalsifyError};
use crate::learn::{learn_bound_two_batch, min_norm_point, Atom, KappaStep, LearnError, LearnerConfig, ReactiveBound};
use crate::rcp::{certify, RcpCertificate};
use crate::trace::{Label, Snapshot, SnapshotSelector, Trace};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("falsification failed in iteration {iteration}: {source}")]
    Falsify { iteration: usize, source: FalsifyError },
    #[error("learning failed in iteration {iteration}: {source}")]
    Learn { iteration: usize, source: LearnError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub max_iterations: usize,
    /// Falsifier rollouts per iteration.
    pub budget: usize,
    pub seed: u64,
    /// Certificate violation level.
    pub epsilon: f64,
    /// Fraction of positives used to tune κ; the rest fit and certify.
    pub split: f64,
    pub split_seed: u64,
    pub annealing: AnnealingConfig,
    /// Overrides the benchmark's snapshot selector.
    pub selector: Option<SnapshotSelector>,
    /// Overrides the benchmark's learner settings.
    pub learner: Option<LearnerConfig>,
    pub diagnosis_k: usize,
    pub diagnosis_delta: f64,
    pub confirm: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 8,
            budget: 2000,
            seed: 0,
            epsilon: 0.05,
            split: 0.5,
            split_seed: 0,
            annealing: AnnealingConfig::default(),
            selector: None,
            learner: None,
            diagnosis_k: 25,
            diagnosis_delta: 0.0,
            confirm: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.max_iterations == 0 {
            return Err(LoopError::Config("max_iterations must be at least 1".into()));
        }
        if self.budget == 0 {
            return Err(LoopError::Config("budget must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(LoopError::Config("split must lie strictly between 0 and 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(LoopError::Config("epsilon must lie in (0, 1]".into()));
        }
        if self.diagnosis_k == 0 || !(self.diagnosis_delta >= 0.0) {
            return Err(LoopError::Config("diagnosis needs k ≥ 1 and δ ≥ 0".into()));
        }
        Ok(())
    }

    /// Falsifier seed of iteration `i` (1-based).
    pub fn iteration_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
    }

    pub fn confirm_seed(&self) -> u64 {
        self.iteration_seed(0) ^ 0xC0FF_EE00_D15E_A5E5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Verified,
    FalsifiedAtCap,
    InherentlyUnsafe,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Verified => 0,
            Verdict::FalsifiedAtCap => 2,
            Verdict::InherentlyUnsafe => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub falsify_s: f64,
    pub learn_s: f64,
    pub certify_s: f64,
    pub diagnose_s: f64,
}

impl PhaseTimes {
    fn add(&mut self, o: &PhaseTimes) {
        self.falsify_s += o.falsify_s;
        self.learn_s += o.learn_s;
        self.certify_s += o.certify_s;
        self.diagnose_s += o.diagnose_s;
    }
}

/// Audit record of one loop iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub falsified: bool,
    pub robustness: f64,
    pub evaluations: usize,
    pub negatives_added: usize,
    pub negatives_total: usize,
    /// SHA-256 of the bound JSON learned at the end of this iteration.
    pub bound_hash: Option<String>,
    pub kappa: Option<f64>,
    pub kappa_trajectory: Vec<KappaStep>,
    pub objectives: Vec<f64>,
    pub certificate: Option<RcpCertificate>,
    /// Smallest `h` over the positives the bound was fitted on.
    pub min_positive_h: Option<f64>,
    /// Accumulated negatives still accepted with `h ≥ ε_active`.
    pub negatives_accepted: Option<usize>,
    pub times: PhaseTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmRun {
    pub seed: u64,
    pub falsified: bool,
    pub robustness: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub benchmark: String,
    pub verdict: Verdict,
    pub iterations_used: usize,
    pub budget: usize,
    /// Bound in force during the last falsification.
    pub final_bound: Option<ReactiveBound>,
    pub certificate: Option<RcpCertificate>,
    pub records: Vec<IterationRecord>,
    pub counter_examples: Vec<Trace>,
    pub confirmatory: Option<ConfirmRun>,
    /// Result of the inherent-unsafety diagnosis when the cap was hit.
    pub diagnosis: Option<bool>,
    pub times: PhaseTimes,
    pub total_s: f64,
}

pub fn bound_hash(bound: &ReactiveBound) -> String {
    hex::encode(Sha256::digest(bound.to_json().as_bytes()))
}

/// Deterministic split of the positives into (tuning, fitting) batches.
pub fn split_batches(positives: &[Snapshot], fraction: f64, seed: u64) -> (Vec<Snapshot>, Vec<Snapshot>) {
    let mut idx: Vec<usize> = (0..positives.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((positives.len() as f64) * fraction).round() as usize;
    let take = |r: &[usize]| r.iter().map(|&i| positives[i].clone()).collect::<Vec<_>>();
    (take(&idx[..cut]), take(&idx[cut..]))
}

fn fail(it: usize) -> impl Fn(FalsifyError) -> LoopError {
    move |source| LoopError::Falsify { iteration: it, source }
}

/// Runs the loop to a verdict.
pub fn verify_loop(problem: &Problem, positives: &[Snapshot], cfg: &LoopConfig) -> Result<VerificationResult, LoopError> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(LoopError::Config("no positive snapshots".into()));
    }
    let start = Instant::now();
    let learner = cfg.learner.clone().unwrap_or_else(|| problem.learner.clone());
    let selector = cfg.selector.clone().unwrap_or_else(|| problem.selector.clone());
    let (tune, fit) = split_batches(positives, cfg.split, cfg.split_seed);
    let sys = problem.closed_loop();

    let mut negatives: Vec<Snapshot> = Vec::new();
    let mut bound: Option<ReactiveBound> = None;
    let mut certificate = None;
    let mut records = Vec::new();
    let mut counter_examples = Vec::new();
    let mut total = PhaseTimes::default();
    let mut verdict = Verdict::FalsifiedAtCap;

    for it in 1..=cfg.max_iterations {
        let mut times = PhaseTimes::default();
        let seed = cfg.iteration_seed(it);
        let t0 = Instant::now();
        let res = falsify(&sys, bound.as_ref(), &problem.input, cfg.budget, seed, &cfg.annealing).map_err(fail(it))?;
        times.falsify_s = t0.elapsed().as_secs_f64();
        log::info!(
            "{} iteration {it}: robustness {:.4} after {} rollouts ({})",
            problem.name,
            res.best_robustness,
            res.evaluations,
            if res.falsified { "falsified" } else { "not falsified" }
        );
        let mut rec = IterationRecord {
            iteration: it,
            seed,
            falsified: res.falsified,
            robustness: res.best_robustness,
            evaluations: res.evaluations,
            negatives_added: 0,
            negatives_total: negatives.len(),
            bound_hash: None,
            kappa: None,
            kappa_trajectory: vec![],
            objectives: vec![],
            certificate: None,
            min_positive_h: None,
            negatives_accepted: None,
            times: PhaseTimes::default(),
        };
        if !res.falsified {
            verdict = Verdict::Verified;
            rec.times = times;
            total.add(&rec.times);
            records.push(rec);
            break;
        }
        let trace = res.best_trace.expect("falsified results carry a trace");
        let mut added = selector.extract(&trace, Label::Negative);
        if added.is_empty() {
            // Nothing scored above the threshold; fall back to the whole trace.
            let mut all = SnapshotSelector::all();
            all.max_per_trace = selector.max_per_trace;
            added = all.extract(&trace, Label::Negative);
        }
        rec.negatives_added = added.len();
        negatives.extend(added);
        rec.negatives_total = negatives.len();
        counter_examples.push(trace);

        if it < cfg.max_iterations {
            let t1 = Instant::now();
            let out = learn_bound_two_batch(&learner, &tune, &fit, &negatives)
                .map_err(|source| LoopError::Learn { iteration: it, source })?;
            times.learn_s = t1.elapsed().as_secs_f64();
            let b = out.bound;
            rec.bound_hash = Some(bound_hash(&b));
            rec.kappa = learner.piecewise().then_some(b.kappa);
            rec.kappa_trajectory = out.kappa_trajectory;
            rec.objectives = out.objectives;
            rec.min_positive_h = fit.iter().map(|s| b.evaluate_h(&s.x, &s.d)).reduce(f64::min);
            rec.negatives_accepted =
                Some(negatives.iter().filter(|s| b.evaluate_h(&s.x, &s.d) >= learner.eps_active).count());
            let t2 = Instant::now();
            rec.certificate = match certify(&b, &fit, cfg.epsilon) {
                Ok(c) => Some(c),
                Err(e) => {
                    log::warn!("no certificate in iteration {it}: {e}");
                    None
                }
            };
            times.certify_s = t2.elapsed().as_secs_f64();
            certificate = rec.certificate.clone();
            bound = Some(b);
        }
        rec.times = times;
        total.add(&rec.times);
        records.push(rec);
    }

    let mut confirmatory = None;
    let mut diagnosis = None;
    match verdict {
        Verdict::Verified => {
            if bound.is_none() {
                certificate = None;
            }
            if cfg.confirm {
                let t = Instant::now();
                let seed = cfg.confirm_seed();
                let r = falsify(&sys, bound.as_ref(), &problem.input, cfg.budget, seed, &cfg.annealing)
                    .map_err(fail(records.len()))?;
                total.falsify_s += t.elapsed().as_secs_f64();
                confirmatory =
                    Some(ConfirmRun { seed, falsified: r.falsified, robustness: r.best_robustness, evaluations: r.evaluations });
            }
        }
        _ => {
            let t = Instant::now();
            let last = counter_examples.last().expect("cap reached with a counter-example");
            let unsafe_ = diagnose_inherent_unsafety(last, positives, cfg.diagnosis_k, cfg.diagnosis_delta);
            total.diagnose_s += t.elapsed().as_secs_f64();
            diagnosis = Some(unsafe_);
            if unsafe_ {
                verdict = Verdict::InherentlyUnsafe;
            }
        }
    }

    Ok(VerificationResult {
        benchmark: problem.name.clone(),
        verdict,
        iterations_used: records.len(),
        budget: cfg.budget,
        final_bound: bound,
        certificate,
        records,
        counter_examples,
        confirmatory,
        diagnosis,
        times: total,
        total_s: start.elapsed().as_secs_f64(),
    })
}

/// Whether every environment input of `trace` lies within `delta` of the
/// convex hull of the inputs observed at the `k` positive states nearest to
/// the trace state. States are compared after scaling each component by its
/// spread in the positive data.
pub fn diagnose_inherent_unsafety(trace: &Trace, positives: &[Snapshot], k: usize, delta: f64) -> bool {
    if positives.is_empty() {
        return false;
    }
    let n = positives[0].x.len();
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let mean = positives.iter().map(|s| s.x[j]).sum::<f64>() / positives.len() as f64;
            let var = positives.iter().map(|s| (s.x[j] - mean).powi(2)).sum::<f64>() / positives.len() as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    trace.samples().iter().all(|s| {
        let mut near: Vec<(f64, usize)> = positives
            .iter()
            .enumerate()
            .map(|(i, p)| (p.x.iter().zip(&s.x).zip(&scale).map(|((a, b), c)| ((a - b) / c).powi(2)).sum(), i))
            .collect();
        let k = k.min(near.len());
        near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
        let pts: Vec<Vec<f64>> = near[..k]
            .iter()
            .map(|&(_, i)| positives[i].d.iter().zip(&s.d).map(|(a, b)| a - b).collect())
            .collect();
        hull_distance(&pts) <= delta + 1e-9 * (1.0 + pts.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())))
    })
}

/// Distance from the origin to the convex hull of `pts`.
pub fn hull_distance(pts: &[Vec<f64>]) -> f64 {
    let norm2 = |p: &Vec<f64>| p.iter().map(|v| v * v).sum::<f64>();
    let start = (0..pts.len()).min_by(|&a, &b| norm2(&pts[a]).total_cmp(&norm2(&pts[b]))).expect("nonempty");
    if norm2(&pts[start]) == 0.0 {
        return 0.0;
    }
    let oracle = |x: &[f64]| {
        let (i, p) = pts
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da: f64 = a.1.iter().zip(x).map(|(u, v)| u * v).sum();
                let db: f64 = b.1.iter().zip(x).map(|(u, v)| u * v).sum();
                da.total_cmp(&db)
            })
            .expect("nonempty");
        Atom { key: i as u64, point: p.clone() }
    };
    let r = min_norm_point(Atom { key: start as u64, point: pts[start].clone() }, oracle, 10_000, 1e-15);
    r.x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
