//! Auto-tuned two-region SVM: alternate the multi-hyperplane learner on the
//! extended features `[m₁φ; m₂φ]` with descent steps on the split `κ`.

use serde::{Deserialize, Serialize};

use super::svm::{multi_hyperplane_svm, SvmData};
use super::{dot, membership, Hyperplane, LearnError};

/// Base features `φᵢ`, region values `g(zᵢ)`, labels and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseData {
    pub phi: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub positive: Vec<bool>,
    pub costs: Vec<f64>,
}

impl PiecewiseData {
    pub fn extended(&self, kappa: f64, gamma: f64) -> Result<SvmData, LearnError> {
        let features = self
            .phi
            .iter()
            .zip(&self.g)
            .map(|(f, &g)| {
                let (m1, m2) = membership(g, kappa, gamma);
                f.iter().map(|v| m1 * v).chain(f.iter().map(|v| m2 * v)).collect()
            })
            .collect();
        SvmData::new(features, self.positive.clone(), self.costs.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutotuneConfig {
    pub gamma: f64,
    pub kappa0: f64,
    pub iterations: usize,
    pub n_h: usize,
    pub eps_active: f64,
    /// First step size; `None` uses a tenth of the range of `g`.
    pub eta0: Option<f64>,
    pub negative_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaStep {
    pub kappa: f64,
    pub objective: f64,
    pub gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutotuneResult {
    pub kappa: f64,
    /// Hyperplanes over the extended features at the selected κ.
    pub hyperplanes: Vec<Hyperplane>,
    pub objectives: Vec<f64>,
    pub trajectory: Vec<KappaStep>,
}

/// `d(kᵀM)/dκ` with `(v, c)` frozen, for slacks `Mᵢ = v̄ᵀφ̄ᵢ + c`:
/// `Σ kᵢ (v₁ᵀφᵢ − v₂ᵀφᵢ) γ m₁ m₂`.
pub fn kappa_objective_gradient(v: &[f64], phi: &[Vec<f64>], g: &[f64], costs: &[f64], kappa: f64, gamma: f64) -> f64 {
    let p = v.len() / 2;
    phi.iter()
        .zip(g)
        .zip(costs)
        .map(|((f, &gi), &k)| {
            let (m1, m2) = membership(gi, kappa, gamma);
            k * (dot(&v[..p], f) - dot(&v[p..], f)) * gamma * m1 * m2
        })
        .sum()
}

/// Per-point `∂Mᵢ/∂κ` for a frozen hyperplane.
fn slack_derivatives(v: &[f64], phi: &[Vec<f64>], g: &[f64], kappa: f64, gamma: f64) -> Vec<f64> {
    let p = v.len() / 2;
    phi.iter()
        .zip(g)
        .map(|(f, &gi)| {
            let (m1, m2) = membership(gi, kappa, gamma);
            (dot(&v[..p], f) - dot(&v[p..], f)) * gamma * m1 * m2
        })
        .collect()
}

struct Evaluated {
    hyperplanes: Vec<Hyperplane>,
    objectives: Vec<f64>,
    /// Objective of the primary (first) hyperplane.
    objective: f64,
    gradient: f64,
    /// Directional derivatives of the penalized objective for κ moving up
    /// and down.
    up: f64,
    down: f64,
}

fn evaluate(data: &PiecewiseData, cfg: &AutotuneConfig, kappa: f64) -> Result<Evaluated, LearnError> {
    let ext = data.extended(kappa, cfg.gamma)?;
    let rounds = multi_hyperplane_svm(&ext, cfg.n_h, cfg.eps_active, cfg.negative_ratio)?;
    let first = &rounds[0];
    let penalty = 1e3 * first.costs.iter().copied().fold(0.0, f64::max);
    let phi: Vec<Vec<f64>> = first.trained_on.iter().map(|&i| data.phi[i].clone()).collect();
    let g: Vec<f64> = first.trained_on.iter().map(|&i| data.g[i]).collect();
    let gradient = kappa_objective_gradient(&first.hyperplane.v, &phi, &g, &first.costs, kappa, cfg.gamma);
    let dm = slack_derivatives(&first.hyperplane.v, &phi, &g, kappa, cfg.gamma);
    let (mut up, mut down) = (gradient, -gradient);
    // Positives on the boundary would turn negative under a frozen
    // hyperplane; penalize the direction that pushes them out.
    for (slot, &i) in first.trained_on.iter().enumerate() {
        if !data.positive[i] {
            continue;
        }
        let m = dot(&first.hyperplane.v, &ext.features[i]) + first.hyperplane.c;
        if m <= 1e-9 {
            let d = dm[slot];
            if d < 0.0 {
                up += penalty * -d;
            } else {
                down += penalty * d;
            }
        }
    }
    let objectives: Vec<f64> = rounds.iter().map(|r| r.objective).collect();
    Ok(Evaluated {
        hyperplanes: rounds.into_iter().map(|r| r.hyperplane).collect(),
        objective: objectives[0],
        objectives,
        gradient,
        up,
        down,
    })
}

/// Runs `iterations` rounds of learning and normalized κ descent with step
/// `η₀/√t`, returning the κ with the lowest primary objective seen. The
/// penalized derivatives pick the direction when one of them descends;
/// otherwise the plain gradient does, since the next solve restores every
/// positive slack.
pub fn autotune_piecewise_svm(data: &PiecewiseData, cfg: &AutotuneConfig) -> Result<AutotuneResult, LearnError> {
    if cfg.iterations == 0 {
        return Err(LearnError::Config("iterations must be at least 1".into()));
    }
    if !(cfg.gamma > 0.0) {
        return Err(LearnError::Config("gamma must be positive".into()));
    }
    let (gmin, gmax) = data.g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| (a.min(g), b.max(g)));
    let eta0 = cfg.eta0.unwrap_or(0.1 * (gmax - gmin));
    let mut kappa = cfg.kappa0;
    let mut trajectory = Vec::new();
    let mut best: Option<(f64, Evaluated)> = None;
    for t in 1..=cfg.iterations {
        let ev = evaluate(data, cfg, kappa)?;
        trajectory.push(KappaStep { kappa, objective: ev.objective, gradient: ev.gradient });
        log::debug!("kappa {kappa:.6} objective {:.6e} gradient {:.3e}", ev.objective, ev.gradient);
        let dir = if ev.up < 0.0 && ev.up <= ev.down {
            1.0
        } else if ev.down < 0.0 {
            -1.0
        } else {
            -ev.gradient.signum()
        };
        let step = eta0 / (t as f64).sqrt();
        if best.as_ref().map_or(true, |(_, b)| ev.objective < b.objective) {
            best = Some((kappa, ev));
        }
        if dir == 0.0 || step == 0.0 {
            break;
        }
        kappa = (kappa + dir * step).clamp(gmin, gmax);
    }
    let (kappa, ev) = best.expect("at least one iteration ran");
    Ok(AutotuneResult { kappa, hyperplanes: ev.hyperplanes, objectives: ev.objectives, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frozen_objective(v: &[f64], c: f64, data: &PiecewiseData, kappa: f64, gamma: f64) -> f64 {
        let ext = data.extended(kappa, gamma).unwrap();
        ext.features.iter().zip(&data.costs).map(|(f, k)| k * (dot(v, f) + c)).sum()
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let data = PiecewiseData {
            phi: vec![vec![0.4, -1.0], vec![1.2, 0.3], vec![-0.5, 0.8]],
            g: vec![-0.2, 0.1, 0.35],
            positive: vec![true, false, true],
            costs: vec![1.0, 2.0, 0.5],
        };
        let v = [0.3, -0.1, 0.5, 0.7];
        let (kappa, gamma) = (0.05, 6.0);
        let h = 1e-5;
        let fd = (frozen_objective(&v, 0.2, &data, kappa + h, gamma) - frozen_objective(&v, 0.2, &data, kappa - h, gamma)) / (2.0 * h);
        let an = kappa_objective_gradient(&v, &data.phi, &data.g, &data.costs, kappa, gamma);
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{fd} vs {an}");
    }

    #[test]
    fn saturated_memberships_kill_the_gradient() {
        let phi = vec![vec![1.0], vec![-2.0]];
        let g = vec![-5.0, 5.0];
        let grad = kappa_objective_gradient(&[0.6, -0.8], &phi, &g, &[1.0, 1.0], 0.0, 20.0);
        assert!(grad.abs() < 1e-8);
    }

    #[test]
    fn gradient_scales_with_gamma_at_midpoint() {
        let phi = vec![vec![1.0, 0.5], vec![-0.3, 2.0]];
        let g = vec![0.4, 0.4];
        let v = [0.1, 0.2, -0.3, 0.4];
        let a = kappa_objective_gradient(&v, &phi, &g, &[1.0, 3.0], 0.4, 5.0);
        let b = kappa_objective_gradient(&v, &phi, &g, &[1.0, 3.0], 0.4, 10.0);
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn zero_step_keeps_kappa() {
        let data = PiecewiseData {
            phi: vec![vec![0.1], vec![0.3], vec![1.5], vec![-1.2]],
            g: vec![-1.0, 1.0, -0.5, 0.5],
            positive: vec![true, true, false, false],
            costs: vec![1.0; 4],
        };
        let cfg = AutotuneConfig {
            gamma: 4.0,
            kappa0: 0.5,
            iterations: 1,
            n_h: 2,
            eps_active: 1e-3,
            eta0: Some(0.0),
            negative_ratio: None,
        };
        let res = autotune_piecewise_svm(&data, &cfg).unwrap();
        assert_eq!(res.kappa, 0.5);
        let rounds = multi_hyperplane_svm(&data.extended(0.5, 4.0).unwrap(), 2, 1e-3, None).unwrap();
        let direct: Vec<Hyperplane> = rounds.into_iter().map(|r| r.hyperplane).collect();
        assert_eq!(res.hyperplanes, direct);
    }
}
