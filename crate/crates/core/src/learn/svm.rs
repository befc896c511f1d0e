//! L1 SVM with hard positive constraints.
//!
//! With slacks `Mᵢ = vᵀφᵢ + c` the problem
//! `min Σ kᵢMᵢ  s.t. ‖v‖₂ ≤ 1, Mᵢ ≥ 0 for positives`
//! has the dual `max −‖Σ wᵢφᵢ‖` over `w_P ≤ k_P`, `Σ w = 0` (negatives fixed
//! at their cost). The primal is recovered as `v = −x*/‖x*‖` from the
//! minimum-norm point `x*` of that polytope, and `c` is the smallest offset
//! keeping every positive on the nonnegative side. The weighted variant lets
//! each negative weight range over `[k_nc, k_nw]`, which changes only the
//! oracle.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::mnp::{min_norm_point, Atom};
use super::{dot, Hyperplane, LearnError};

/// Training set in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmData {
    pub features: Vec<Vec<f64>>,
    pub positive: Vec<bool>,
    pub costs: Vec<f64>,
}

impl SvmData {
    pub fn new(features: Vec<Vec<f64>>, positive: Vec<bool>, costs: Vec<f64>) -> Result<Self, LearnError> {
        let n = features.len();
        if positive.len() != n || costs.len() != n {
            return Err(LearnError::Dimension(format!(
                "{n} feature rows, {} labels, {} costs",
                positive.len(),
                costs.len()
            )));
        }
        let p = features.first().map_or(0, Vec::len);
        if features.iter().any(|f| f.len() != p) {
            return Err(LearnError::Dimension("feature rows differ in length".into()));
        }
        if let Some(k) = costs.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(LearnError::InvalidCost(*k));
        }
        if !positive.iter().any(|&y| y) {
            return Err(LearnError::NoPositives);
        }
        Ok(Self { features, positive, costs })
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn subset(&self, keep: &[usize]) -> SvmData {
        SvmData {
            features: keep.iter().map(|&i| self.features[i].clone()).collect(),
            positive: keep.iter().map(|&i| self.positive[i]).collect(),
            costs: keep.iter().map(|&i| self.costs[i]).collect(),
        }
    }

    /// Scales negative costs so they total `ratio` times the positive total.
    pub fn rebalance(&mut self, ratio: f64) {
        let (mut kp, mut kn) = (0.0, 0.0);
        for (k, &y) in self.costs.iter().zip(&self.positive) {
            if y {
                kp += k;
            } else {
                kn += k;
            }
        }
        if kn > 0.0 {
            let s = ratio * kp / kn;
            for (k, &y) in self.costs.iter_mut().zip(&self.positive) {
                if !y {
                    *k *= s;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSolution {
    pub v: Vec<f64>,
    pub c: f64,
    /// `Mᵢ = vᵀφᵢ + c`.
    pub slack: Vec<f64>,
    pub objective: f64,
    /// Duality gap of the returned point.
    pub gap: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SvmSolution {
    pub fn hyperplane(&self) -> Hyperplane {
        Hyperplane { v: self.v.clone(), c: self.c }
    }
}

const MAX_ITER: usize = 20_000;
const REL_TOL: f64 = 1e-13;

/// Solves the L1 SVM with one cost per point.
pub fn solve_l1_svm(data: &SvmData) -> Result<SvmSolution, LearnError> {
    let lo: Vec<f64> = data.costs.clone();
    solve_general(data, &lo, &data.costs)
}

/// Weighted variant: positives cost `data.costs`, negatives cost `k_nw` when
/// on the positive side (`M ≥ 0`) and `k_nc` otherwise.
pub fn solve_weighted_svm(data: &SvmData, k_nc: &[f64], k_nw: &[f64]) -> Result<SvmSolution, LearnError> {
    if k_nc.len() != data.len() || k_nw.len() != data.len() {
        return Err(LearnError::Dimension("weight vectors must have one entry per point".into()));
    }
    for i in 0..data.len() {
        if !data.positive[i] && !(0.0 <= k_nc[i] && k_nc[i] <= k_nw[i]) {
            return Err(LearnError::InvalidCost(k_nc[i]));
        }
    }
    solve_general(data, k_nc, k_nw)
}

fn solve_general(data: &SvmData, k_nc: &[f64], k_nw: &[f64]) -> Result<SvmSolution, LearnError> {
    let p = data.dim();
    let pos: Vec<usize> = (0..data.len()).filter(|&i| data.positive[i]).collect();
    let neg: Vec<usize> = (0..data.len()).filter(|&i| !data.positive[i]).collect();
    let k_pos: f64 = pos.iter().map(|&i| data.costs[i]).sum();
    let mut base = vec![0.0; p];
    for &i in &pos {
        axpy(data.costs[i], &data.features[i], &mut base);
    }
    let split: Vec<bool> = neg.iter().map(|&i| k_nc[i] != k_nw[i]).collect();

    let atom_for = |j: usize, choice: &dyn Fn(usize) -> bool| -> Atom {
        // choice(n) == true selects the lower weight k_nc for negative n.
        let mut point = base.clone();
        let mut w_neg = 0.0;
        let mut h = DefaultHasher::new();
        j.hash(&mut h);
        for (n_idx, &i) in neg.iter().enumerate() {
            let lower = choice(n_idx);
            let w = if lower { k_nc[i] } else { k_nw[i] };
            if split[n_idx] {
                lower.hash(&mut h);
            }
            w_neg += w;
            axpy(w, &data.features[i], &mut point);
        }
        axpy(-(k_pos + w_neg), &data.features[j], &mut point);
        Atom { key: h.finish(), point }
    };

    let oracle = |x: &[f64]| -> Atom {
        let mut best_j = pos[0];
        let mut t_max = f64::NEG_INFINITY;
        for &i in &pos {
            let t = dot(x, &data.features[i]);
            if t > t_max {
                t_max = t;
                best_j = i;
            }
        }
        let t_neg: Vec<f64> = neg.iter().map(|&i| dot(x, &data.features[i])).collect();
        atom_for(best_j, &|n| t_neg[n] > t_max)
    };

    let start = atom_for(pos[0], &|_| false);
    let mnp = min_norm_point(start, oracle, MAX_ITER, REL_TOL);
    if !mnp.converged {
        log::warn!("L1 SVM stopped after {} iterations with gap {:e}", mnp.iterations, mnp.gap);
    }
    let norm = dot(&mnp.x, &mnp.x).sqrt();
    let scale = base.iter().map(|v| v.abs()).fold(k_pos, f64::max);
    let v: Vec<f64> = if norm <= 1e-12 * scale.max(1.0) {
        vec![0.0; p]
    } else {
        mnp.x.iter().map(|xi| -xi / norm).collect()
    };
    let c = -pos
        .iter()
        .map(|&i| dot(&v, &data.features[i]))
        .fold(f64::INFINITY, f64::min);
    let c = if v.iter().all(|&vi| vi == 0.0) { 0.0 } else { c };
    let slack: Vec<f64> = data.features.iter().map(|f| dot(&v, f) + c).collect();
    let objective = (0..data.len())
        .map(|i| {
            let m = slack[i];
            if data.positive[i] {
                data.costs[i] * m
            } else if m >= 0.0 {
                k_nw[i] * m
            } else {
                k_nc[i] * m
            }
        })
        .sum();
    Ok(SvmSolution { v, c, slack, objective, gap: mnp.gap, converged: mnp.converged, iterations: mnp.iterations })
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One greedy round of the multi-hyperplane learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneRound {
    pub hyperplane: Hyperplane,
    pub objective: f64,
    /// Indices (into the full data set) of the points this round was trained on.
    pub trained_on: Vec<usize>,
    /// Costs used in this round, aligned with `trained_on`.
    pub costs: Vec<f64>,
    pub negatives_remaining: usize,
}

/// Greedy multi-hyperplane learner: after each solve only the negatives with
/// slack `M ≥ eps_active` (still on the positive side) are kept. When
/// `rebalance` is set, negative costs are rescaled each round to total that
/// multiple of the positive cost.
pub fn multi_hyperplane_svm(
    data: &SvmData,
    n_h: usize,
    eps_active: f64,
    rebalance: Option<f64>,
) -> Result<Vec<HyperplaneRound>, LearnError> {
    if n_h == 0 {
        return Err(LearnError::Config("N_h must be at least 1".into()));
    }
    if !(eps_active > 0.0) {
        return Err(LearnError::Config("eps_active must be positive".into()));
    }
    let positives: Vec<usize> = (0..data.len()).filter(|&i| data.positive[i]).collect();
    let mut active_neg: Vec<usize> = (0..data.len()).filter(|&i| !data.positive[i]).collect();
    let mut rounds = Vec::new();
    for round in 0..n_h {
        let idx: Vec<usize> = positives.iter().chain(&active_neg).copied().collect();
        let mut sub = data.subset(&idx);
        if let Some(r) = rebalance {
            sub.rebalance(r);
        }
        let sol = solve_l1_svm(&sub)?;
        let degenerate = sol.v.iter().all(|&v| v == 0.0);
        if degenerate && round > 0 {
            break;
        }
        let np = positives.len();
        active_neg = active_neg
            .iter()
            .enumerate()
            .filter(|(k, _)| sol.slack[np + k] >= eps_active)
            .map(|(_, &i)| i)
            .collect();
        rounds.push(HyperplaneRound {
            hyperplane: sol.hyperplane(),
            objective: sol.objective,
            trained_on: idx,
            costs: sub.costs,
            negatives_remaining: active_neg.len(),
        });
        if active_neg.is_empty() || degenerate {
            break;
        }
    }
    Ok(rounds)
}
