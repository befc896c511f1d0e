//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use rv_core::bench::mpc::{solve_binary, solve_monotone, MpcParams};
use rv_core::learn::{Hyperplane, ReactiveBound};
use rv_core::qp::Polytope;
use rv_core::stl::{Formula, Interval, Predicates};
use rv_core::trace::{Sample, Trace};

// ---------------------------------------------------------------- STL

pub const STL_DT: f64 = 0.5;
pub const PRED_NAMES: [&str; 3] = ["p", "q", "r"];

pub fn stl_predicates() -> Predicates {
    let mut preds = Predicates::new();
    for (i, n) in PRED_NAMES.iter().enumerate() {
        preds = preds.bind(n, move |s: &Sample| s.x[i]);
    }
    preds
}

fn random_interval(rng: &mut ChaCha8Rng) -> Interval {
    let lo = rng.gen_range(0..4usize);
    let hi = lo + rng.gen_range(0..4usize);
    Interval::new(lo as f64 * STL_DT, hi as f64 * STL_DT).unwrap()
}

pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize) -> Formula {
    let leaf = depth == 0 || rng.gen_bool(0.2);
    if leaf {
        return if rng.gen_bool(0.05) {
            Formula::True
        } else {
            Formula::pred(PRED_NAMES[rng.gen_range(0..PRED_NAMES.len())])
        };
    }
    let sub = |rng: &mut ChaCha8Rng| Box::new(random_formula(rng, depth - 1));
    match rng.gen_range(0..6) {
        0 => Formula::Not(sub(rng)),
        1 => Formula::And(sub(rng), sub(rng)),
        2 => Formula::Or(sub(rng), sub(rng)),
        3 => Formula::Until(random_interval(rng), sub(rng), sub(rng)),
        4 => Formula::Eventually(random_interval(rng), sub(rng)),
        _ => Formula::Always(random_interval(rng), sub(rng)),
    }
}

/// Predicate values in `[-1, 1]`, some quantized so that ties occur.
pub fn random_stl_trace(rng: &mut ChaCha8Rng, len: usize) -> Trace {
    let quantized = rng.gen_bool(0.3);
    let samples = (0..len)
        .map(|_| {
            let x = (0..PRED_NAMES.len())
                .map(|_| {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if quantized {
                        (v * 2.0).round() / 2.0
                    } else {
                        v
                    }
                })
                .collect();
            Sample { x, u: vec![], d: vec![] }
        })
        .collect();
    Trace::new(STL_DT, samples).unwrap()
}

fn steps(t: f64) -> usize {
    (t / STL_DT).round() as usize
}

/// Samples needed beyond `t`, counted directly on the formula tree.
pub fn brute_horizon(f: &Formula) -> usize {
    match f {
        Formula::True | Formula::Pred(_) => 0,
        Formula::Not(a) => brute_horizon(a),
        Formula::And(a, b) | Formula::Or(a, b) => brute_horizon(a).max(brute_horizon(b)),
        Formula::Until(i, a, b) => steps(i.b) + brute_horizon(a).max(brute_horizon(b)),
        Formula::Eventually(i, a) | Formula::Always(i, a) => steps(i.b) + brute_horizon(a),
    }
}

/// Boolean semantics by direct recursion over the definition.
pub fn brute_sat(f: &Formula, tr: &Trace, t: usize) -> bool {
    match f {
        Formula::True => true,
        Formula::Pred(n) => {
            let i = PRED_NAMES.iter().position(|p| p == n).unwrap();
            tr.sample(t).x[i] > 0.0
        }
        Formula::Not(a) => !brute_sat(a, tr, t),
        Formula::And(a, b) => brute_sat(a, tr, t) && brute_sat(b, tr, t),
        Formula::Or(a, b) => brute_sat(a, tr, t) || brute_sat(b, tr, t),
        Formula::Eventually(i, a) => (t + steps(i.a)..=t + steps(i.b)).any(|s| brute_sat(a, tr, s)),
        Formula::Always(i, a) => (t + steps(i.a)..=t + steps(i.b)).all(|s| brute_sat(a, tr, s)),
        Formula::Until(i, a, b) => (t + steps(i.a)..=t + steps(i.b))
            .any(|s| brute_sat(b, tr, s) && (t..=s).all(|r| brute_sat(a, tr, r))),
    }
}

// ---------------------------------------------------------------- SVM

/// `Σ kᵢ(vᵀφᵢ + c)` at the smallest `c` keeping every positive slack ≥ 0.
pub fn svm_objective_at(v: &[f64], phi: &[Vec<f64>], positive: &[bool], costs: &[f64]) -> f64 {
    let dot = |f: &[f64]| v.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
    let c = -phi
        .iter()
        .zip(positive)
        .filter(|(_, &y)| y)
        .map(|(f, _)| dot(f))
        .fold(f64::INFINITY, f64::min);
    phi.iter().zip(costs).map(|(f, k)| k * (dot(f) + c)).sum()
}

/// Grid search over the unit ball, refined around the incumbent. The
/// objective is convex in `v`, so each refinement keeps the minimizer.
pub fn svm_grid_oracle(phi: &[Vec<f64>], positive: &[bool], costs: &[f64]) -> f64 {
    let p = phi[0].len();
    let f = |v: &[f64]| svm_objective_at(v, phi, positive, costs);
    match p {
        1 => {
            let n = 2_000_000;
            (0..=n).map(|i| f(&[-1.0 + 2.0 * i as f64 / n as f64])).fold(f64::INFINITY, f64::min)
        }
        2 => {
            let mut center = [0.0, 0.0];
            let mut half = 1.0;
            let mut best = f64::INFINITY;
            let n = 200;
            for _ in 0..8 {
                let mut arg = center;
                for i in 0..=n {
                    for j in 0..=n {
                        let v = [
                            center[0] - half + 2.0 * half * i as f64 / n as f64,
                            center[1] - half + 2.0 * half * j as f64 / n as f64,
                        ];
                        if v[0].hypot(v[1]) > 1.0 {
                            continue;
                        }
                        let o = f(&v);
                        if o < best {
                            best = o;
                            arg = v;
                        }
                    }
                }
                center = arg;
                half *= 0.1;
            }
            best
        }
        _ => panic!("grid oracle supports p ≤ 2"),
    }
}

// ---------------------------------------------------------------- RCP

/// `Φ(a/2^m, k, N)` in exact arithmetic, returned as `(mantissa, exponent)`
/// with value `mantissa · 2^exponent`.
pub fn phi_exact(a: u64, m: u32, k: usize, n: usize) -> (f64, i64) {
    let b = BigUint::one() << m;
    let a_big = BigUint::from(a);
    let q = &b - &a_big;
    let mut num = BigUint::zero();
    let mut binom = BigUint::one();
    let mut pow_a = BigUint::one();
    for j in 0..=k {
        if j > 0 {
            binom = binom * BigUint::from(n - j + 1) / BigUint::from(j);
            pow_a *= &a_big;
        }
        num += &binom * &pow_a * q.pow((n - j) as u32);
    }
    if num.is_zero() {
        return (0.0, 0);
    }
    let bits = num.bits() as i64;
    let shift = (bits - 64).max(0);
    let top = (&num >> shift as usize).to_u64().unwrap() as f64;
    (top, shift - m as i64 * n as i64)
}

pub fn exact_to_f64((mant, exp): (f64, i64)) -> Option<f64> {
    if mant == 0.0 {
        return Some(0.0);
    }
    let log2 = mant.log2() + exp as f64;
    if log2 < -1000.0 {
        return None;
    }
    let e = exp as i32;
    // Split the scaling so neither factor overflows.
    Some(mant * 2f64.powi(e / 2) * 2f64.powi(e - e / 2))
}

pub fn exact_ln((mant, exp): (f64, i64)) -> f64 {
    mant.ln() + exp as f64 * std::f64::consts::LN_2
}

/// `min ε + Φ(ε)(1−ε)` over a uniform grid of step `1/steps`.
pub fn epsilon_bar_grid(n: usize, k: usize, steps: usize) -> f64 {
    (0..=steps)
        .map(|i| {
            let e = i as f64 / steps as f64;
            e + rv_core::rcp::phi(e, k, n).unwrap() * (1.0 - e)
        })
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------- Projection

/// Random bound `h(d) = min vᵢᵀd + cᵢ` in 2-D together with an admissible
/// box, both containing a disc of radius 0.05 around `center`.
pub fn random_planar_bound(rng: &mut ChaCha8Rng) -> (ReactiveBound, Polytope, [f64; 2]) {
    use rv_core::learn::FeatureMap;
    use rv_core::trace::BoxLimits;
    let center = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let m = rng.gen_range(1..6);
    let hyperplanes = (0..m)
        .map(|_| {
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let v = vec![th.cos(), th.sin()];
            let slack = rng.gen_range(0.05..1.5);
            let c = -(v[0] * center[0] + v[1] * center[1]) + slack;
            Hyperplane { v, c }
        })
        .collect();
    let bound = ReactiveBound::single(FeatureMap::Disturbance, hyperplanes);
    let lo = vec![center[0] - rng.gen_range(0.5..3.0), center[1] - rng.gen_range(0.5..3.0)];
    let hi = vec![center[0] + rng.gen_range(0.5..3.0), center[1] + rng.gen_range(0.5..3.0)];
    (bound, Polytope::from_box(&BoxLimits::new(lo, hi)), center)
}

/// Distance from `d` to the feasible set, by grid search at `res` refined
/// from a coarse pass. The distance is convex, so refinement is safe.
pub fn projection_grid_oracle(bound: &ReactiveBound, admissible: &Polytope, d: [f64; 2], res: f64) -> f64 {
    let feasible = |p: [f64; 2]| bound.evaluate_h(&[], &p) >= 0.0 && admissible.contains(&p, 0.0);
    let dist = |p: [f64; 2]| (p[0] - d[0]).hypot(p[1] - d[1]);
    let scan = |lo: [f64; 2], hi: [f64; 2], step: f64| {
        let nx = ((hi[0] - lo[0]) / step).ceil() as usize;
        let ny = ((hi[1] - lo[1]) / step).ceil() as usize;
        let mut best = (f64::INFINITY, lo);
        for i in 0..=nx {
            for j in 0..=ny {
                let p = [lo[0] + i as f64 * step, lo[1] + j as f64 * step];
                if feasible(p) {
                    let r = dist(p);
                    if r < best.0 {
                        best = (r, p);
                    }
                }
            }
        }
        best
    };
    let coarse = 0.02;
    let (_, p) = scan([-5.0, -5.0], [5.0, 5.0], coarse);
    let w = 3.0 * coarse;
    let (_, p) = scan([p[0] - w, p[1] - w], [p[0] + w, p[1] + w], res);
    // A last pass at a tenth of `res` resolves thin wedges of the feasible set.
    let w = 3.0 * res;
    scan([p[0] - w, p[1] - w], [p[0] + w, p[1] + w], res / 10.0).0
}

// ---------------------------------------------------------------- MPC

pub struct MpcInstance {
    pub params: MpcParams,
    pub x: [f64; 4],
    pub a2: f64,
}

pub fn random_mpc_instance(rng: &mut ChaCha8Rng) -> MpcInstance {
    let mut params = MpcParams::default();
    params.steps = rng.gen_range(1..=6);
    let x = [
        rng.gen_range(-8.0..12.0),
        rng.gen_range(-4.5..-1.0),
        rng.gen_range(-4.0..4.0),
        rng.gen_range(0.0..0.12),
    ];
    MpcInstance { params, x, a2: rng.gen_range(-3.0..3.0) }
}

/// `(monotone, binary)` objectives, `None` when infeasible.
pub fn mpc_objectives(inst: &MpcInstance) -> (Option<f64>, Option<f64>) {
    let m = solve_monotone(&inst.params, &inst.x, inst.a2).unwrap().map(|p| p.objective);
    let b = solve_binary(&inst.params, &inst.x, inst.a2).unwrap().map(|p| p.objective);
    (m, b)
}

/// Exact distance from `d` to the feasible polygon: the minimum over `d`
/// itself, feet of perpendiculars on every edge line and every pairwise line
/// intersection, keeping only feasible candidates.
pub fn projection_vertex_oracle(bound: &ReactiveBound, admissible: &Polytope, d: [f64; 2]) -> f64 {
    let poly = bound.polytope(&[], admissible).unwrap();
    let lines: Vec<([f64; 2], f64)> = poly.rows().map(|(a, b)| ([a[0], a[1]], b)).collect();
    let feasible = |p: [f64; 2]| poly.violation(&p) <= 1e-10;
    let mut cands = vec![d];
    for (a, b) in &lines {
        let s = a[0] * d[0] + a[1] * d[1] - b;
        cands.push([d[0] - s * a[0], d[1] - s * a[1]]);
    }
    for (i, (a1, b1)) in lines.iter().enumerate() {
        for (a2, b2) in &lines[i + 1..] {
            let det = a1[0] * a2[1] - a1[1] * a2[0];
            if det.abs() > 1e-12 {
                cands.push([(b1 * a2[1] - a1[1] * b2) / det, (a1[0] * b2 - b1 * a2[0]) / det]);
            }
        }
    }
    cands
        .into_iter()
        .filter(|&p| feasible(p))
        .map(|p| (p[0] - d[0]).hypot(p[1] - d[1]))
        .fold(f64::INFINITY, f64::min)
}
