//! Receding-horizon lane-change controller.
//!
//! The prediction model is the lane-change dynamics linearized with
//! `sin ψ ≈ ψ`, with the human driver's acceleration assumed to decay as
//! `a₂(0)e^{−t/τ}`. The collision-avoidance disjunction requires each
//! predicted state to lie in the origin-lane region `ΔY ≤ −a − m` or the
//! ahead-of-HV region `ΔX ≥ b + m`. Heading is kept nonnegative over the
//! horizon, so `ΔY` is nondecreasing along any plan; a plan that satisfies
//! some region pattern then also satisfies the pattern that switches once,
//! at the first step leaving the origin-lane region. Enumerating the `H + 1`
//! single-switch patterns is therefore exact.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::qp::{Qp, QpError};
use crate::trace::Controller;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcParams {
    /// Prediction horizon in steps.
    pub steps: usize,
    pub dt: f64,
    pub v1: f64,
    pub tau: f64,
    /// Car width.
    pub a: f64,
    /// Car length.
    pub b: f64,
    /// Lane width.
    pub w: f64,
    /// Clearance added to both collision regions.
    pub margin: f64,
    pub a1_min: f64,
    pub a1_max: f64,
    pub r1_max: f64,
    pub psi_max: f64,
    pub q_y: f64,
    pub q_psi: f64,
    pub r_a: f64,
    pub r_r: f64,
    pub collision_avoidance: bool,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            steps: 8,
            dt: 0.2,
            v1: 20.0,
            tau: 2.0,
            a: 2.0,
            b: 4.5,
            w: 3.7,
            margin: 0.3,
            a1_min: -5.0,
            a1_max: 3.0,
            r1_max: 0.3,
            psi_max: 0.15,
            q_y: 1.0,
            q_psi: 20.0,
            r_a: 0.05,
            r_r: 2.0,
            collision_avoidance: true,
        }
    }
}

/// Region of the collision-avoidance disjunction at one predicted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    OriginLane,
    AheadOfHv,
}

/// Predicted states as affine functions of the stacked inputs
/// `U = [a₁,₀, r₁,₀, …]`: `x_k = F_k U + f_k` for `k = 1..=H`.
struct Prediction {
    f_mat: Vec<DMatrix<f64>>,
    f_vec: Vec<DVector<f64>>,
}

fn predict(p: &MpcParams, x: &[f64], a2: f64) -> Prediction {
    let h = p.steps;
    let dt = p.dt;
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, dt, 0.0, //
        0.0, 1.0, 0.0, dt * p.v1, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    ]);
    let mut fm = DMatrix::<f64>::zeros(4, 2 * h);
    let mut fv = DVector::from_column_slice(x);
    let mut out = Prediction { f_mat: Vec::with_capacity(h), f_vec: Vec::with_capacity(h) };
    for k in 0..h {
        fm = &a * fm;
        fv = &a * fv;
        fm[(2, 2 * k)] += dt;
        fm[(3, 2 * k + 1)] += dt;
        fv[2] -= dt * a2 * (-(k as f64) * dt / p.tau).exp();
        out.f_mat.push(fm.clone());
        out.f_vec.push(fv.clone());
    }
    out
}

/// Best plan: the first input and the QP objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub input: [f64; 2],
    pub objective: f64,
    /// Number of leading steps in the origin-lane region.
    pub switch: Option<usize>,
}

fn base_qp(p: &MpcParams, pred: &Prediction) -> Qp {
    let n = 2 * p.steps;
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut lin = DVector::<f64>::zeros(n);
    for (fm, fv) in pred.f_mat.iter().zip(&pred.f_vec) {
        for (row, q) in [(1, p.q_y), (3, p.q_psi)] {
            let r = fm.row(row).transpose();
            g += 2.0 * q * &r * r.transpose();
            lin += 2.0 * q * fv[row] * &r;
        }
    }
    for k in 0..p.steps {
        g[(2 * k, 2 * k)] += 2.0 * p.r_a;
        g[(2 * k + 1, 2 * k + 1)] += 2.0 * p.r_r;
    }
    let mut qp = Qp::new(g, lin);
    let unit = |i: usize| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    };
    for k in 0..p.steps {
        qp.ge(unit(2 * k), p.a1_min).le(unit(2 * k), p.a1_max);
        qp.ge(unit(2 * k + 1), -p.r1_max).le(unit(2 * k + 1), p.r1_max);
    }
    let lk_hi = 0.5 * p.w - 0.5 * p.a;
    let lk_lo = -1.5 * p.w + 0.5 * p.a;
    for (k, (fm, fv)) in pred.f_mat.iter().zip(&pred.f_vec).enumerate() {
        let y = fm.row(1).transpose();
        qp.le(y.clone(), lk_hi - fv[1]).ge(y, lk_lo - fv[1]);
        let psi = fm.row(3).transpose();
        qp.le(psi.clone(), p.psi_max - fv[3]);
        if k + 1 < p.steps {
            qp.ge(psi, -fv[3]);
        }
    }
    qp
}

fn with_regions(p: &MpcParams, pred: &Prediction, regions: &[Region]) -> Qp {
    let mut qp = base_qp(p, pred);
    for ((fm, fv), r) in pred.f_mat.iter().zip(&pred.f_vec).zip(regions) {
        match r {
            Region::OriginLane => {
                qp.le(fm.row(1).transpose(), -p.a - p.margin - fv[1]);
            }
            Region::AheadOfHv => {
                qp.ge(fm.row(0).transpose(), p.b + p.margin - fv[0]);
            }
        }
    }
    qp
}

fn solve(qp: &Qp) -> Result<Option<(DVector<f64>, f64)>, QpError> {
    match qp.solve() {
        Ok(s) => Ok(Some((s.x, s.objective))),
        Err(QpError::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

fn better(best: &mut Option<Plan>, cand: Option<(DVector<f64>, f64)>, switch: Option<usize>) {
    if let Some((u, obj)) = cand {
        if best.as_ref().map_or(true, |b| obj < b.objective) {
            *best = Some(Plan { input: [u[0], u[1]], objective: obj, switch });
        }
    }
}

/// Objective-optimal plan over the `H + 1` single-switch region patterns,
/// or over no regions at all when collision avoidance is off.
pub fn solve_monotone(p: &MpcParams, x: &[f64], a2: f64) -> Result<Option<Plan>, QpError> {
    let pred = predict(p, x, a2);
    let mut best = None;
    if !p.collision_avoidance {
        better(&mut best, solve(&base_qp(p, &pred))?, None);
        return Ok(best);
    }
    for s in 0..=p.steps {
        let regions: Vec<Region> =
            (0..p.steps).map(|k| if k < s { Region::OriginLane } else { Region::AheadOfHv }).collect();
        better(&mut best, solve(&with_regions(p, &pred, &regions))?, Some(s));
    }
    Ok(best)
}

/// Reference solver over all `2^H` region patterns.
pub fn solve_binary(p: &MpcParams, x: &[f64], a2: f64) -> Result<Option<Plan>, QpError> {
    assert!(p.steps <= 16, "binary enumeration is exponential in the horizon");
    let pred = predict(p, x, a2);
    let mut best = None;
    for mask in 0u32..(1 << p.steps) {
        let regions: Vec<Region> = (0..p.steps)
            .map(|k| if mask >> k & 1 == 1 { Region::AheadOfHv } else { Region::OriginLane })
            .collect();
        better(&mut best, solve(&with_regions(p, &pred, &regions))?, None);
    }
    Ok(best)
}

/// MPC wrapped as a closed-loop controller. Steps where no pattern is
/// feasible fall back to holding the lane and are counted.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub params: MpcParams,
    pub fallbacks: Vec<f64>,
}

impl MpcController {
    pub fn new(params: MpcParams) -> Self {
        Self { params, fallbacks: Vec::new() }
    }

    /// Zero acceleration, steering the heading back to zero.
    pub fn fallback_input(&self, x: &[f64]) -> [f64; 2] {
        let r = (-x[3] / self.params.dt).clamp(-self.params.r1_max, self.params.r1_max);
        [0.0, r]
    }
}

impl Controller for MpcController {
    fn control(&mut self, x: &[f64], d: &[f64], t: f64) -> Vec<f64> {
        match solve_monotone(&self.params, x, d[0]) {
            Ok(Some(plan)) => plan.input.to_vec(),
            Ok(None) | Err(_) => {
                log::trace!("mpc fallback at t={t:.2}");
                self.fallbacks.push(t);
                self.fallback_input(x).to_vec()
            }
        }
    }
}
