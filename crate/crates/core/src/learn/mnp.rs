//! Wolfe's minimum-norm-point algorithm over a polytope given implicitly by
//! a linear minimization oracle.

use nalgebra::{DMatrix, DVector};

/// A vertex returned by the oracle. `key` identifies the vertex so the
/// algorithm can tell when the oracle repeats itself.
#[derive(Debug, Clone)]
pub struct Atom {
    pub key: u64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MinNormPoint {
    pub x: Vec<f64>,
    /// `‖x‖² − min_a ⟨x, a⟩`, zero at the optimum.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(atoms: &[Atom], w: &[f64], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for (a, &wi) in atoms.iter().zip(w) {
        for (xj, aj) in x.iter_mut().zip(&a.point) {
            *xj += wi * aj;
        }
    }
    x
}

/// Affine minimizer `argmin ‖Σ αᵢ sᵢ‖` with `Σ αᵢ = 1`.
fn affine_min(atoms: &[Atom]) -> Option<Vec<f64>> {
    let q = atoms.len();
    let mut m = DMatrix::<f64>::zeros(q + 1, q + 1);
    for i in 0..q {
        for j in 0..=i {
            let g = dot(&atoms[i].point, &atoms[j].point);
            m[(i, j)] = g;
            m[(j, i)] = g;
        }
        m[(i, q)] = 1.0;
        m[(q, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(q + 1);
    rhs[q] = 1.0;
    let sol = m.full_piv_lu().solve(&rhs)?;
    let alpha: Vec<f64> = sol.rows(0, q).iter().copied().collect();
    alpha.iter().all(|a| a.is_finite()).then_some(alpha)
}

/// Minimizes `‖x‖` over the convex hull of the oracle's vertices, starting
/// from `start`. `oracle(x)` must return `argmin_a ⟨x, a⟩`.
pub fn min_norm_point(
    start: Atom,
    mut oracle: impl FnMut(&[f64]) -> Atom,
    max_iter: usize,
    rel_tol: f64,
) -> MinNormPoint {
    let dim = start.point.len();
    let mut scale = dot(&start.point, &start.point).max(1e-300);
    let mut corral = vec![start];
    let mut lambda: Vec<f64> = vec![1.0];
    let mut x = corral[0].point.clone();
    let mut gap = f64::INFINITY;
    for it in 1..=max_iter {
        let a = oracle(&x);
        scale = scale.max(dot(&a.point, &a.point));
        let xx = dot(&x, &x);
        gap = xx - dot(&x, &a.point);
        if gap <= rel_tol * scale || corral.iter().any(|s| s.key == a.key) {
            return MinNormPoint { x, gap: gap.max(0.0), iterations: it, converged: true };
        }
        corral.push(a);
        lambda.push(0.0);
        // Minor cycles: move toward the affine minimizer until it lies in
        // the relative interior of the corral's hull.
        loop {
            let Some(alpha) = affine_min(&corral) else {
                // Affinely dependent corral; drop the smallest weight.
                let k = (0..lambda.len()).min_by(|&i, &j| lambda[i].total_cmp(&lambda[j])).unwrap();
                corral.remove(k);
                lambda.remove(k);
                let s: f64 = lambda.iter().sum();
                lambda.iter_mut().for_each(|l| *l /= s);
                x = combine(&corral, &lambda, dim);
                break;
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                lambda = alpha;
                x = combine(&corral, &lambda, dim);
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-14 {
                    let denom = l - a;
                    if denom > 0.0 {
                        theta = theta.min(l / denom);
                    }
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            let mut k = 0;
            while k < corral.len() {
                if lambda[k] <= 1e-14 {
                    corral.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            let s: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= s);
            x = combine(&corral, &lambda, dim);
            if corral.len() == 1 {
                break;
            }
        }
    }
    MinNormPoint { x, gap, iterations: max_iter, converged: false }
}
