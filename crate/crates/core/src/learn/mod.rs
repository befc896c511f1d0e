//! Reactive bounds `S_d(x) = {d | h(x,d) ≥ 0}` learned with L1 SVMs.
//!
//! A bound holds one or two regions. Each region has the same number of
//! hyperplanes, and hyperplane `i` evaluates to
//! `hᵢ(x,d) = Σ_r m_r(x)·(v_{r,i}ᵀφ(x,d) + c_{r,i})`, where the memberships
//! `m_r` are sigmoids of a region function `g(x)` split at `κ`. The bound is
//! `h = minᵢ hᵢ`. With a single region `m₁ ≡ 1`.

mod autotune;
mod mnp;
mod svm;

pub use autotune::{autotune_piecewise_svm, kappa_objective_gradient, AutotuneConfig, AutotuneResult, KappaStep, PiecewiseData};
pub use mnp::{min_norm_point, Atom, MinNormPoint};
pub use svm::{multi_hyperplane_svm, solve_l1_svm, solve_weighted_svm, HyperplaneRound, SvmData, SvmSolution};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{Polytope, QpError};
use crate::trace::{Label, Snapshot};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("costs must be positive and finite, got {0}")]
    InvalidCost(f64),
    #[error("at least one positive snapshot is required")]
    NoPositives,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("feature map `{0}` is not linear in d")]
    NotLinearInD(FeatureMap),
    #[error("the bound admits no disturbance at this state")]
    EmptyPolytope,
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("bound file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalization constants of the lane-change features.
pub const LC_DX_SCALE: f64 = 20.0;
pub const LC_DV_SCALE: f64 = 5.0;
pub const LC_DY_SCALE: f64 = 4.0;
pub const LC_A_SCALE: f64 = 4.0;
/// Distance normalization of the robot features.
pub const ROBOT_RANGE_SCALE: f64 = 4.0;

/// Explicit feature maps `φ(x, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// `φ = d`.
    Disturbance,
    /// `φ = [x; d]`.
    StateDisturbance,
    /// Two-robot features on `v₂ = d[0..2]` relative to `ê_r = (p₂−p₁)/‖p₂−p₁‖`:
    /// `[v₂; v₂·ê_r; v₂·ê_θ; (r/4)(v₂·ê_r)]`.
    Robot,
    /// Lane-change features on `a₂ = d[0]` with normalized `ΔX, Δv, ΔY`:
    /// `[a₂; a₂ΔX; a₂Δv; a₂ΔY; ΔX; Δv; ΔY; ΔXΔv]`.
    LaneChange,
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureMap::Disturbance => "disturbance",
            FeatureMap::StateDisturbance => "state_disturbance",
            FeatureMap::Robot => "robot",
            FeatureMap::LaneChange => "lane_change",
        };
        f.write_str(s)
    }
}

impl FeatureMap {
    pub fn dim(&self, n: usize, k: usize) -> usize {
        match self {
            FeatureMap::Disturbance => k,
            FeatureMap::StateDisturbance => n + k,
            FeatureMap::Robot => 5,
            FeatureMap::LaneChange => 8,
        }
    }

    pub fn linear_in_d(&self) -> bool {
        true
    }

    pub fn eval(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Disturbance => d.to_vec(),
            FeatureMap::StateDisturbance => x.iter().chain(d).copied().collect(),
            FeatureMap::Robot => {
                let (rx, ry) = (x[2] - x[0], x[3] - x[1]);
                let r = rx.hypot(ry);
                let (ex, ey) = if r > 1e-9 { (rx / r, ry / r) } else { (1.0, 0.0) };
                let (vx, vy) = (d[0], d[1]);
                let vr = vx * ex + vy * ey;
                let vt = -vx * ey + vy * ex;
                vec![vx, vy, vr, vt, r / ROBOT_RANGE_SCALE * vr]
            }
            FeatureMap::LaneChange => {
                let dx = x[0] / LC_DX_SCALE;
                let dy = x[1] / LC_DY_SCALE;
                let dv = x[2] / LC_DV_SCALE;
                let a = d[0] / LC_A_SCALE;
                vec![a, a * dx, a * dv, a * dy, dx, dv, dy, dx * dv]
            }
        }
    }

    /// `φ(x, d) = A d + b` at fixed `x`; `A` is returned row-major, `p × k`.
    pub fn linear_parts(&self, x: &[f64], k: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), LearnError> {
        if !self.linear_in_d() {
            return Err(LearnError::NotLinearInD(*self));
        }
        let zero = vec![0.0; k];
        let b = self.eval(x, &zero);
        let mut a = vec![vec![0.0; k]; b.len()];
        for j in 0..k {
            let mut e = zero.clone();
            e[j] = 1.0;
            let col = self.eval(x, &e);
            for (row, (cj, bj)) in a.iter_mut().zip(col.iter().zip(&b)) {
                row[j] = cj - bj;
            }
        }
        Ok((a, b))
    }
}

impl FromStr for FeatureMap {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| LearnError::Config(format!("unknown feature map `{s}`")))
    }
}

/// Scalar region function `g(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RegionFn {
    /// Single region.
    None,
    /// `g(x) = x[i]`.
    State(usize),
}

impl RegionFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RegionFn::None => 0.0,
            RegionFn::State(i) => x[*i],
        }
    }
}

impl fmt::Display for RegionFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionFn::None => f.write_str("none"),
            RegionFn::State(i) => write!(f, "x{i}"),
        }
    }
}

impl From<RegionFn> for String {
    fn from(g: RegionFn) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for RegionFn {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        if s == "none" {
            return Ok(RegionFn::None);
        }
        s.strip_prefix('x')
            .and_then(|i| i.parse().ok())
            .map(RegionFn::State)
            .ok_or_else(|| format!("unknown region function `{s}`"))
    }
}

/// Sigmoid memberships `(m₁, m₂)` with `m₁ = 1/(1+exp(γ(g−κ)))`, evaluated
/// without overflow; `m₂ = 1 − m₁`.
pub fn membership(g: f64, kappa: f64, gamma: f64) -> (f64, f64) {
    let z = gamma * (g - kappa);
    let m1 = if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    (m1, 1.0 - m1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub v: Vec<f64>,
    pub c: f64,
}

/// Where a bound's parameters came from; used to enforce the two-batch
/// certification protocol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Fingerprint of the positive batch κ was tuned on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_tuned_on: Option<String>,
    /// Fingerprint of the positive batch the hyperplanes were fitted on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_on: Option<String>,
}

impl Provenance {
    fn is_empty(&self) -> bool {
        self.kappa_tuned_on.is_none() && self.fitted_on.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactiveBound {
    pub feature_map: FeatureMap,
    pub g: RegionFn,
    pub kappa: f64,
    pub gamma: f64,
    pub regions: Vec<Vec<Hyperplane>>,
    #[serde(default, skip_serializing_if = "Provenance::is_empty")]
    pub provenance: Provenance,
}

impl ReactiveBound {
    pub fn single(feature_map: FeatureMap, hyperplanes: Vec<Hyperplane>) -> Self {
        Self {
            feature_map,
            g: RegionFn::None,
            kappa: 0.0,
            gamma: 1.0,
            regions: vec![hyperplanes],
            provenance: Provenance::default(),
        }
    }

    /// Splits hyperplanes over the extended features `[m₁φ; m₂φ]` into two
    /// regions sharing the offset.
    pub fn piecewise(feature_map: FeatureMap, g: RegionFn, kappa: f64, gamma: f64, extended: &[Hyperplane]) -> Self {
        let mut r1 = Vec::new();
        let mut r2 = Vec::new();
        for h in extended {
            let p = h.v.len() / 2;
            r1.push(Hyperplane { v: h.v[..p].to_vec(), c: h.c });
            r2.push(Hyperplane { v: h.v[p..].to_vec(), c: h.c });
        }
        Self { feature_map, g, kappa, gamma, regions: vec![r1, r2], provenance: Provenance::default() }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.regions.is_empty() || self.regions.len() > 2 {
            return Err(LearnError::Config(format!("{} regions; expected 1 or 2", self.regions.len())));
        }
        let n_h = self.regions[0].len();
        if n_h == 0 || self.regions.iter().any(|r| r.len() != n_h) {
            return Err(LearnError::Config("every region needs the same, nonzero hyperplane count".into()));
        }
        let p = self.regions[0][0].v.len();
        if self.regions.iter().flatten().any(|h| h.v.len() != p) {
            return Err(LearnError::Config("hyperplanes differ in dimension".into()));
        }
        if self.regions.len() == 2 && (self.g == RegionFn::None || !(self.gamma > 0.0)) {
            return Err(LearnError::Config("two regions need a region function and gamma > 0".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.regions[0][0].v.len()
    }

    /// Dimension entering the certificate: `p` per region.
    pub fn helly_feature_dim(&self) -> usize {
        self.feature_dim() * self.regions.len()
    }

    /// Hyperplanes across regions, as counted by the certificate.
    pub fn hyperplane_count(&self) -> usize {
        self.regions.iter().map(Vec::len).sum()
    }

    pub fn memberships(&self, x: &[f64]) -> Vec<f64> {
        if self.regions.len() == 1 {
            return vec![1.0];
        }
        let (m1, m2) = membership(self.g.eval(x), self.kappa, self.gamma);
        vec![m1, m2]
    }

    /// Per-hyperplane values `hᵢ(x, d)`.
    pub fn hyperplane_values(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        let phi = self.feature_map.eval(x, d);
        let m = self.memberships(x);
        (0..self.regions[0].len())
            .map(|i| {
                let mut s = 0.0;
                for (r, mr) in self.regions.iter().zip(&m) {
                    s += mr * dot(&r[i].v, &phi);
                }
                for (r, mr) in self.regions.iter().zip(&m) {
                    s += mr * r[i].c;
                }
                s
            })
            .collect()
    }

    pub fn evaluate_h(&self, x: &[f64], d: &[f64]) -> f64 {
        self.hyperplane_values(x, d).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn accepts(&self, x: &[f64], d: &[f64]) -> bool {
        self.evaluate_h(x, d) >= 0.0
    }

    /// `{d | h(x,d) ≥ 0} ∩ admissible`, one half-space per hyperplane.
    pub fn polytope(&self, x: &[f64], admissible: &Polytope) -> Result<Polytope, LearnError> {
        let k = admissible.dim();
        let (a, b) = self.feature_map.linear_parts(x, k)?;
        let m = self.memberships(x);
        let mut poly = admissible.clone();
        for i in 0..self.regions[0].len() {
            let mut row = vec![0.0; k];
            let mut rhs = 0.0;
            for (r, mr) in self.regions.iter().zip(&m) {
                let h = &r[i];
                for (j, rj) in row.iter_mut().enumerate() {
                    *rj -= mr * h.v.iter().zip(&a).map(|(vp, ap)| vp * ap[j]).sum::<f64>();
                }
                rhs += mr * (dot(&h.v, &b) + h.c);
            }
            poly.push(row, rhs);
        }
        Ok(poly)
    }

    /// Euclidean projection of `d_raw` onto the bound at `x`.
    pub fn project(&self, x: &[f64], d_raw: &[f64], admissible: &Polytope) -> Result<Vec<f64>, LearnError> {
        let poly = self.polytope(x, admissible)?;
        poly.project(d_raw).map_err(|e| match e {
            QpError::Infeasible => LearnError::EmptyPolytope,
            other => LearnError::Qp(other),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bound serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let b: ReactiveBound = serde_json::from_str(text)?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Learner settings shared by the snapshot-level entry points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub feature_map: FeatureMap,
    #[serde(default = "default_region")]
    pub g: RegionFn,
    #[serde(default = "default_n_h")]
    pub n_h: usize,
    #[serde(default = "default_eps_active")]
    pub eps_active: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub kappa0: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Initial κ step; defaults to a tenth of the data range of `g`.
    #[serde(default)]
    pub eta0: Option<f64>,
    /// Total negative cost as a multiple of the total positive cost.
    #[serde(default = "default_ratio")]
    pub negative_ratio: f64,
}

fn default_region() -> RegionFn {
    RegionFn::None
}
fn default_n_h() -> usize {
    1
}
fn default_eps_active() -> f64 {
    1e-3
}
fn default_gamma() -> f64 {
    20.0
}
fn default_iterations() -> usize {
    20
}
fn default_ratio() -> f64 {
    1.0
}

impl LearnerConfig {
    pub fn new(feature_map: FeatureMap) -> Self {
        Self {
            feature_map,
            g: RegionFn::None,
            n_h: 1,
            eps_active: default_eps_active(),
            gamma: default_gamma(),
            kappa0: 0.0,
            iterations: default_iterations(),
            eta0: None,
            negative_ratio: 1.0,
        }
    }

    pub fn piecewise(&self) -> bool {
        self.g != RegionFn::None
    }

    fn autotune(&self, kappa0: f64, iterations: usize, eta0: Option<f64>) -> AutotuneConfig {
        AutotuneConfig {
            gamma: self.gamma,
            kappa0,
            iterations,
            n_h: self.n_h,
            eps_active: self.eps_active,
            eta0,
            negative_ratio: Some(self.negative_ratio),
        }
    }
}

/// Base features, region values and costs for a snapshot set.
pub fn piecewise_data(
    cfg: &LearnerConfig,
    positives: &[Snapshot],
    negatives: &[Snapshot],
) -> Result<PiecewiseData, LearnError> {
    let all: Vec<&Snapshot> = positives.iter().chain(negatives).collect();
    for s in &all {
        if !(s.weight > 0.0) {
            return Err(LearnError::InvalidCost(s.weight));
        }
    }
    Ok(PiecewiseData {
        phi: all.iter().map(|s| cfg.feature_map.eval(&s.x, &s.d)).collect(),
        g: all.iter().map(|s| cfg.g.eval(&s.x)).collect(),
        positive: all.iter().map(|s| s.y == Label::Positive).collect(),
        costs: all.iter().map(|s| s.weight).collect(),
    })
}

/// Outcome of learning from snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOutcome {
    pub bound: ReactiveBound,
    pub objectives: Vec<f64>,
    pub kappa_trajectory: Vec<KappaStep>,
}

/// Learns a bound. Single-region configs run the multi-hyperplane learner;
/// piecewise configs auto-tune κ.
pub fn learn_bound(cfg: &LearnerConfig, positives: &[Snapshot], negatives: &[Snapshot]) -> Result<LearnOutcome, LearnError> {
    if positives.is_empty() {
        return Err(LearnError::NoPositives);
    }
    let data = piecewise_data(cfg, positives, negatives)?;
    if !cfg.piecewise() {
        let svm = SvmData::new(data.phi, data.positive, data.costs)?;
        let rounds = multi_hyperplane_svm(&svm, cfg.n_h, cfg.eps_active, Some(cfg.negative_ratio))?;
        let bound = ReactiveBound::single(cfg.feature_map, rounds.iter().map(|r| r.hyperplane.clone()).collect());
        return Ok(LearnOutcome { bound, objectives: rounds.iter().map(|r| r.objective).collect(), kappa_trajectory: vec![] });
    }
    let res = autotune_piecewise_svm(&data, &cfg.autotune(cfg.kappa0, cfg.iterations, cfg.eta0))?;
    let bound = ReactiveBound::piecewise(cfg.feature_map, cfg.g, res.kappa, cfg.gamma, &res.hyperplanes);
    Ok(LearnOutcome { bound, objectives: res.objectives, kappa_trajectory: res.trajectory })
}

/// Two-batch protocol: κ is tuned on `tune_batch`, then the hyperplanes are
/// refitted on `fit_batch` with κ frozen. The provenance records both
/// batches so that certification can refuse the tuning batch.
pub fn learn_bound_two_batch(
    cfg: &LearnerConfig,
    tune_batch: &[Snapshot],
    fit_batch: &[Snapshot],
    negatives: &[Snapshot],
) -> Result<LearnOutcome, LearnError> {
    if !cfg.piecewise() {
        let mut out = learn_bound(cfg, fit_batch, negatives)?;
        out.bound.provenance.fitted_on = Some(crate::rcp::batch_fingerprint(fit_batch));
        return Ok(out);
    }
    let tuned = learn_bound(cfg, tune_batch, negatives)?;
    let kappa = tuned.bound.kappa;
    let data = piecewise_data(cfg, fit_batch, negatives)?;
    let fixed = autotune_piecewise_svm(&data, &cfg.autotune(kappa, 1, Some(0.0)))?;
    let mut bound = ReactiveBound::piecewise(cfg.feature_map, cfg.g, kappa, cfg.gamma, &fixed.hyperplanes);
    bound.provenance = Provenance {
        kappa_tuned_on: Some(crate::rcp::batch_fingerprint(tune_batch)),
        fitted_on: Some(crate::rcp::batch_fingerprint(fit_batch)),
    };
    Ok(LearnOutcome { bound, objectives: fixed.objectives, kappa_trajectory: tuned.kappa_trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::BoxLimits;

    #[test]
    fn membership_properties() {
        assert_eq!(membership(1.5, 1.5, 20.0), (0.5, 0.5));
        let (m1, m2) = membership(2.0, 0.0, 20.0);
        assert!(m1 <= 1e-15 && m2 >= 1.0 - 1e-15);
        let (m1, m2) = membership(-1e6, 0.0, 1e3);
        assert!(m1 == 1.0 && m2 == 0.0);
        for g in [-3.0, -0.1, 0.0, 0.07, 0.3, 9.0] {
            let (a, b) = membership(g, 0.1, 7.0);
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn single_hyperplane_value() {
        let b = ReactiveBound::single(FeatureMap::Disturbance, vec![Hyperplane { v: vec![1.0, 0.0], c: 0.0 }]);
        assert_eq!(b.evaluate_h(&[], &[2.0, 0.0]), 2.0);
    }

    #[test]
    fn minimum_over_hyperplanes() {
        let b = ReactiveBound::single(
            FeatureMap::Disturbance,
            vec![Hyperplane { v: vec![1.0], c: 2.0 }, Hyperplane { v: vec![-1.0], c: 0.0 }],
        );
        assert_eq!(b.evaluate_h(&[], &[1.0]), -1.0);
    }

    #[test]
    fn polytope_of_single_halfspace() {
        let b = ReactiveBound::single(FeatureMap::Disturbance, vec![Hyperplane { v: vec![1.0, 0.0], c: 0.0 }]);
        let boxp = Polytope::from_box(&BoxLimits::symmetric(&[1.0, 1.0]));
        let p = b.polytope(&[], &boxp).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.contains(&[0.5, -0.9], 0.0));
        assert!(!p.contains(&[-0.1, 0.0], 0.0));
        assert_eq!(b.project(&[], &[-0.5, 0.3], &boxp).unwrap(), vec![0.0, 0.3]);
    }

    #[test]
    fn contradictory_bound_is_empty() {
        let b = ReactiveBound::single(
            FeatureMap::Disturbance,
            vec![Hyperplane { v: vec![1.0], c: -2.0 }, Hyperplane { v: vec![-1.0], c: -2.0 }],
        );
        let boxp = Polytope::from_box(&BoxLimits::symmetric(&[5.0]));
        assert!(b.polytope(&[], &boxp).unwrap().is_empty());
        assert!(matches!(b.project(&[], &[0.0], &boxp), Err(LearnError::EmptyPolytope)));
    }

    #[test]
    fn piecewise_polytope_agrees_with_h() {
        let ext = vec![
            Hyperplane { v: vec![0.3, -0.2, 0.1, 0.4, 0.0, -0.5, 0.2, 0.1, -0.3, 0.2], c: 0.4 },
            Hyperplane { v: vec![-0.6, 0.1, 0.2, 0.0, 0.3, 0.1, 0.2, -0.4, 0.0, 0.1], c: 0.2 },
        ];
        let b = ReactiveBound::piecewise(FeatureMap::Robot, RegionFn::State(2), 0.1, 5.0, &ext);
        let adm = Polytope::from_box(&BoxLimits::symmetric(&[1.0; 4]));
        let x = [0.5, -1.0, -0.3, 1.2, 2.0, 2.0];
        let poly = b.polytope(&x, &adm).unwrap();
        let mut s = 0.37f64;
        for _ in 0..1000 {
            let mut d = [0.0; 4];
            for di in d.iter_mut() {
                s = (s * 9301.0 + 0.49297).fract();
                *di = 2.0 * s - 1.0;
            }
            let h = b.evaluate_h(&x, &d);
            if h.abs() > 1e-9 {
                assert_eq!(poly.contains(&d, 0.0), h >= 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ext = vec![Hyperplane { v: vec![0.1, 1.0 / 3.0, -2.0f64.sqrt() / 7.0, 0.0], c: 1e-17 }];
        let b = ReactiveBound::piecewise(FeatureMap::StateDisturbance, RegionFn::State(0), 3e-3, 20.0, &ext);
        let back = ReactiveBound::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
        let x = [0.01];
        assert_eq!(back.evaluate_h(&x, &[0.4]).to_bits(), b.evaluate_h(&x, &[0.4]).to_bits());
        assert!(ReactiveBound::from_json("{\"feature_map\": \"nope\"}").is_err());
    }

    #[test]
    fn feature_maps_are_linear_in_d() {
        let x = [1.0, -2.0, 0.5, 0.3, 0.0, 0.0];
        for fm in [FeatureMap::Robot, FeatureMap::StateDisturbance, FeatureMap::LaneChange] {
            let k = if fm == FeatureMap::LaneChange { 1 } else { 4 };
            let xs = &x[..if fm == FeatureMap::LaneChange { 4 } else { 6 }];
            let (a, b) = fm.linear_parts(xs, k).unwrap();
            let d: Vec<f64> = (0..k).map(|j| 0.3 - 0.2 * j as f64).collect();
            let direct = fm.eval(xs, &d);
            for (i, v) in direct.iter().enumerate() {
                let lin = b[i] + dot(&a[i], &d);
                assert!((v - lin).abs() < 1e-12);
            }
        }
    }
}
