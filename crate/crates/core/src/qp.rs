//! Dense strictly convex quadratic programming and polytopes.
//!
//! [`Qp`] solves `min ½ xᵀGx + aᵀx` subject to linear equalities and
//! inequalities with the Goldfarb-Idnani dual active-set method, which
//! starts from the unconstrained minimizer and adds violated constraints one
//! at a time. It detects infeasibility exactly when no dual step exists.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::BoxLimits;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("no convergence after {0} iterations")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Indices of active constraints in insertion order (equalities first).
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Eq,
    Ge,
}

/// Builder for a strictly convex QP.
#[derive(Debug, Clone)]
pub struct Qp {
    g: DMatrix<f64>,
    a: DVector<f64>,
    rows: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    kinds: Vec<Kind>,
    tol: f64,
}

impl Qp {
    pub fn new(g: DMatrix<f64>, a: DVector<f64>) -> Self {
        Self { g, a, rows: Vec::new(), rhs: Vec::new(), kinds: Vec::new(), tol: 1e-10 }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `rowᵀx ≥ b`.
    pub fn ge(&mut self, row: DVector<f64>, b: f64) -> &mut Self {
        self.push(row, b, Kind::Ge)
    }

    /// `rowᵀx ≤ b`.
    pub fn le(&mut self, row: DVector<f64>, b: f64) -> &mut Self {
        self.push(-row, -b, Kind::Ge)
    }

    /// `rowᵀx = b`.
    pub fn eq(&mut self, row: DVector<f64>, b: f64) -> &mut Self {
        self.push(row, b, Kind::Eq)
    }

    pub fn tolerance(&mut self, tol: f64) -> &mut Self {
        self.tol = tol;
        self
    }

    fn push(&mut self, row: DVector<f64>, b: f64, kind: Kind) -> &mut Self {
        self.rows.push(row);
        self.rhs.push(b);
        self.kinds.push(kind);
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.g * x)) + self.a.dot(x)
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        let n = self.dim();
        if self.g.nrows() != n || self.g.ncols() != n {
            return Err(QpError::Dimension(format!("G is {}x{}, a has {n}", self.g.nrows(), self.g.ncols())));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != n) {
            return Err(QpError::Dimension(format!("constraint {i} has length {}", self.rows[i].len())));
        }
        let chol = Cholesky::new(self.g.clone()).ok_or(QpError::NotPositiveDefinite)?;
        let l = chol.l();
        // J = L⁻ᵀ, so that Jᵀ G J = I.
        let mut j = l
            .transpose()
            .try_inverse()
            .ok_or(QpError::NotPositiveDefinite)?;
        let mut r = DMatrix::<f64>::zeros(n, n);
        let mut x = -chol.solve(&self.a);
        let mut active: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        // Equality rows may have been flipped to make their violation negative.
        let mut sign = vec![1.0; self.rows.len()];
        let max_iter = 50 * (n + self.rows.len()) + 100;
        let mut iterations = 0;

        let scale = |i: usize, x: &DVector<f64>| 1.0 + self.rows[i].amax() * x_scale(x) + self.rhs[i].abs();

        // Equalities first; they are never dropped.
        let eqs: Vec<usize> = (0..self.rows.len()).filter(|&i| self.kinds[i] == Kind::Eq).collect();
        for &p in &eqs {
            let s = self.rows[p].dot(&x) - self.rhs[p];
            if s > 0.0 {
                sign[p] = -1.0;
            }
            let np = &self.rows[p] * sign[p];
            let s = np.dot(&x) - self.rhs[p] * sign[p];
            let q = active.len();
            let d = j.transpose() * &np;
            let z = j.columns(q, n - q) * d.rows(q, n - q);
            let rr = back_substitute(&r, &d, q);
            let zn = z.dot(&np);
            if zn.abs() <= 1e-14 * (1.0 + np.norm_squared()) {
                if s.abs() <= self.tol * scale(p, &x) {
                    continue;
                }
                return Err(QpError::Infeasible);
            }
            let t = -s / zn;
            x += &z * t;
            for (ui, ri) in u.iter_mut().zip(rr.iter()) {
                *ui -= t * ri;
            }
            u.push(t);
            add_constraint(&mut j, &mut r, d, q);
            active.push(p);
        }

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit(max_iter));
            }
            // Step 1: most violated inequality, violations normalized by row size.
            let mut worst = None;
            let mut worst_val = 0.0;
            for i in 0..self.rows.len() {
                if self.kinds[i] != Kind::Ge || active.contains(&i) {
                    continue;
                }
                let s = self.rows[i].dot(&x) - self.rhs[i];
                let norm = self.rows[i].norm().max(1e-300);
                if s < -self.tol * scale(i, &x) && s / norm < worst_val {
                    worst_val = s / norm;
                    worst = Some(i);
                }
            }
            let Some(p) = worst else {
                let multipliers = active
                    .iter()
                    .zip(&u)
                    .map(|(&i, &ui)| ui * sign[i])
                    .collect();
                return Ok(QpSolution {
                    objective: self.objective(&x),
                    x,
                    active,
                    multipliers,
                    iterations,
                });
            };
            let np = self.rows[p].clone();
            let mut u_p = 0.0;
            // Step 2: move along the dual direction until p becomes active.
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return Err(QpError::IterationLimit(max_iter));
                }
                let q = active.len();
                let d = j.transpose() * &np;
                let z = j.columns(q, n - q) * d.rows(q, n - q);
                let rr = back_substitute(&r, &d, q);
                let s = np.dot(&x) - self.rhs[p];
                let zn = z.dot(&np);
                let t2 = if zn.abs() <= 1e-14 * (1.0 + np.norm_squared()) {
                    f64::INFINITY
                } else {
                    -s / zn
                };
                let mut t1 = f64::INFINITY;
                let mut drop = None;
                for k in 0..q {
                    if self.kinds[active[k]] == Kind::Ge && rr[k] > 1e-14 {
                        let ratio = u[k] / rr[k];
                        if ratio < t1 {
                            t1 = ratio;
                            drop = Some(k);
                        }
                    }
                }
                let t = t1.min(t2);
                if !t.is_finite() {
                    return Err(QpError::Infeasible);
                }
                if t2.is_finite() {
                    x += &z * t;
                }
                for (ui, ri) in u.iter_mut().zip(rr.iter()) {
                    *ui -= t * ri;
                }
                u_p += t;
                if t2 <= t1 {
                    add_constraint(&mut j, &mut r, d, q);
                    active.push(p);
                    u.push(u_p);
                    break;
                }
                let k = drop.expect("finite t1 has an index");
                drop_constraint(&mut j, &mut r, k, q);
                active.remove(k);
                u.remove(k);
            }
        }
    }
}

fn x_scale(x: &DVector<f64>) -> f64 {
    x.amax().max(1.0)
}

/// Solves `R[0..q,0..q] r = d[0..q]`.
fn back_substitute(r: &DMatrix<f64>, d: &DVector<f64>, q: usize) -> DVector<f64> {
    let mut out = DVector::zeros(q);
    for i in (0..q).rev() {
        let mut acc = d[i];
        for k in i + 1..q {
            acc -= r[(i, k)] * out[k];
        }
        out[i] = acc / r[(i, i)];
    }
    out
}

fn rotate_columns(j: &mut DMatrix<f64>, a: usize, b: usize, c: f64, s: f64) {
    for i in 0..j.nrows() {
        let (ja, jb) = (j[(i, a)], j[(i, b)]);
        j[(i, a)] = c * ja + s * jb;
        j[(i, b)] = -s * ja + c * jb;
    }
}

fn add_constraint(j: &mut DMatrix<f64>, r: &mut DMatrix<f64>, mut d: DVector<f64>, q: usize) {
    let n = d.len();
    for k in (q + 1..n).rev() {
        if d[k] == 0.0 {
            continue;
        }
        let h = d[k - 1].hypot(d[k]);
        let (c, s) = (d[k - 1] / h, d[k] / h);
        d[k - 1] = h;
        d[k] = 0.0;
        rotate_columns(j, k - 1, k, c, s);
    }
    for i in 0..=q {
        r[(i, q)] = d[i];
    }
}

fn drop_constraint(j: &mut DMatrix<f64>, r: &mut DMatrix<f64>, k: usize, q: usize) {
    for col in k..q - 1 {
        for i in 0..q {
            r[(i, col)] = r[(i, col + 1)];
        }
    }
    for i in 0..q {
        r[(i, q - 1)] = 0.0;
    }
    for row in k..q - 1 {
        let (a, b) = (r[(row, row)], r[(row + 1, row)]);
        if b == 0.0 {
            continue;
        }
        let h = a.hypot(b);
        let (c, s) = (a / h, b / h);
        for col in row..q - 1 {
            let (ra, rb) = (r[(row, col)], r[(row + 1, col)]);
            r[(row, col)] = c * ra + s * rb;
            r[(row + 1, col)] = -s * ra + c * rb;
        }
        rotate_columns(j, row, row + 1, c, s);
    }
}

/// `{d | A d ≤ b}` with unit-norm rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    dim: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Set when a degenerate constraint `0 ≤ b` with `b < 0` was added.
    trivially_empty: bool,
}

impl Polytope {
    pub fn whole_space(dim: usize) -> Self {
        Self { dim, rows: Vec::new(), rhs: Vec::new(), trivially_empty: false }
    }

    pub fn from_box(limits: &BoxLimits) -> Self {
        let mut p = Self::whole_space(limits.dim());
        for i in 0..limits.dim() {
            let mut e = vec![0.0; limits.dim()];
            e[i] = 1.0;
            if limits.hi[i].is_finite() {
                p.push(e.clone(), limits.hi[i]);
            }
            if limits.lo[i].is_finite() {
                e[i] = -1.0;
                p.push(e, -limits.lo[i]);
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty_description(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.rows.iter().map(Vec::as_slice).zip(self.rhs.iter().copied())
    }

    /// Adds `rowᵀd ≤ b`. Rows are normalized; an all-zero row is either
    /// dropped or marks the polytope empty.
    pub fn push(&mut self, row: Vec<f64>, b: f64) {
        assert_eq!(row.len(), self.dim, "half-space dimension");
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            if b < -1e-12 {
                self.trivially_empty = true;
            }
            return;
        }
        self.rows.push(row.iter().map(|v| v / norm).collect());
        self.rhs.push(b / norm);
    }

    pub fn intersect(&self, other: &Polytope) -> Polytope {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        out.rows.extend(other.rows.iter().cloned());
        out.rhs.extend(&other.rhs);
        out.trivially_empty |= other.trivially_empty;
        out
    }

    /// Largest constraint violation, `max_i (a_iᵀd − b_i)`; ≤ 0 inside.
    pub fn violation(&self, d: &[f64]) -> f64 {
        if self.trivially_empty {
            return f64::INFINITY;
        }
        self.rows()
            .map(|(a, b)| a.iter().zip(d).map(|(x, y)| x * y).sum::<f64>() - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, d: &[f64], tol: f64) -> bool {
        self.violation(d) <= tol
    }

    /// Euclidean projection of `d` onto the polytope.
    pub fn project(&self, d: &[f64]) -> Result<Vec<f64>, QpError> {
        if self.trivially_empty {
            return Err(QpError::Infeasible);
        }
        if self.contains(d, 0.0) {
            return Ok(d.to_vec());
        }
        let mut qp = Qp::new(DMatrix::identity(self.dim, self.dim), -DVector::from_column_slice(d));
        for (a, b) in self.rows() {
            qp.le(DVector::from_column_slice(a), b);
        }
        let sol = qp.solve()?;
        Ok(sol.x.iter().copied().collect())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.project(&vec![0.0; self.dim]), Err(QpError::Infeasible))
    }
}
