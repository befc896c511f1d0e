//! Random-convex-program certificates for learned bounds.
//!
//! `Φ(ε, k, N) = Σ_{j≤k} C(N,j) εʲ (1−ε)^{N−j}` is evaluated from
//! saddle-point binomial terms (Loader's algorithm) combined in log space,
//! so it stays accurate far into the tails and for large `N`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::learn::ReactiveBound;
use crate::trace::Snapshot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RcpError {
    #[error("argument out of range: {0}")]
    Domain(String),
    #[error("need p + 2 < N, got p = {p}, N = {n}")]
    HypothesisViolated { n: usize, p: usize },
    #[error("kappa was tuned on the batch being certified; certify on a held-out batch")]
    KappaTunedOnBatch,
    #[error("the bound was fitted on a different batch than the one being certified")]
    BatchMismatch,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln Γ(n+1) − (n+½)ln n + n − ½ln 2π` for integer `n`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    const TABLE: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_258_22,
        0.041_340_695_955_409_294_09,
        0.027_677_925_684_998_339_15,
        0.020_790_672_103_765_093_11,
        0.016_644_691_189_821_192_16,
        0.013_876_128_823_070_747_99,
        0.011_896_709_945_891_770_10,
        0.010_411_265_261_972_096_50,
        0.009_255_462_182_712_732_92,
        0.008_330_563_433_362_871_26,
        0.007_573_675_487_951_840_79,
        0.006_942_840_107_209_529_87,
        0.006_408_994_188_004_207_07,
        0.005_951_370_112_758_847_74,
        0.005_554_733_551_962_801_37,
    ];
    if n <= 15.0 {
        return TABLE[n as usize];
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/m) + m − x`, computed without cancellation.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln P(X = j)` for `X ~ Binomial(n, eps)`, with `0 < eps < 1`.
fn ln_dbinom(j: usize, n: usize, eps: f64) -> f64 {
    let (x, nf) = (j as f64, n as f64);
    let q = 1.0 - eps;
    if j == 0 {
        return nf * (-eps).ln_1p();
    }
    if j == n {
        return nf * eps.ln();
    }
    let lc = stirlerr(nf) - stirlerr(x) - stirlerr(nf - x) - bd0(x, nf * eps) - bd0(nf - x, nf * q);
    let lf = LN_2PI + x.ln() + (-x / nf).ln_1p();
    lc - 0.5 * lf
}

fn check_phi_args(eps: f64, k: usize, n: usize) -> Result<(), RcpError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(RcpError::Domain(format!("epsilon = {eps} not in [0, 1]")));
    }
    if k > n {
        return Err(RcpError::Domain(format!("k = {k} exceeds N = {n}")));
    }
    Ok(())
}

/// `ln Φ(ε, k, N)`.
pub fn ln_phi(eps: f64, k: usize, n: usize) -> Result<f64, RcpError> {
    check_phi_args(eps, k, n)?;
    if k == n || eps == 0.0 {
        return Ok(0.0);
    }
    if eps == 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let logs: Vec<f64> = (0..=k).map(|j| ln_dbinom(j, n, eps)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Neumaier-compensated sum of the scaled terms.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for l in &logs {
        let term = (l - m).exp();
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    Ok((m + (sum + comp).ln()).min(0.0))
}

/// Binomial CDF `Φ(ε, k, N)`.
pub fn phi(eps: f64, k: usize, n: usize) -> Result<f64, RcpError> {
    Ok(ln_phi(eps, k, n)?.exp())
}

/// Bound on the probability that a single learned hyperplane misclassifies
/// more than a fraction `eps` of unseen positives: `Φ(ε, p+2, N)`.
pub fn single_bound(n: usize, p: usize, eps: f64) -> Result<f64, RcpError> {
    if p + 2 >= n {
        return Err(RcpError::HypothesisViolated { n, p });
    }
    phi(eps, p + 2, n)
}

/// `min_{ε∈[0,1]} ε + Φ(ε,k,N)(1−ε)` together with its minimizer.
pub fn epsilon_bar(n: usize, k: usize) -> Result<(f64, f64), RcpError> {
    check_phi_args(0.0, k, n)?;
    let f = |e: f64| e + phi(e, k, n).expect("arguments checked") * (1.0 - e);
    const GRID: usize = 1000;
    let mut best_i = 0;
    let mut best = f(0.0);
    for i in 1..=GRID {
        let v = f(i as f64 / GRID as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = best_i.saturating_sub(1) as f64 / GRID as f64;
    let mut hi = (best_i + 1).min(GRID) as f64 / GRID as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-12 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    let (arg, val) = [(best_i as f64 / GRID as f64, best), (c, fc), (d, fd)]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok((val.clamp(0.0, 1.0), arg))
}

/// Bound for a conjunction of `n_h` hyperplanes: `min(1, ε̄(N, p+2)·N_h/ε′)`.
pub fn multi_bound(n: usize, p: usize, n_h: usize, eps_prime: f64) -> Result<f64, RcpError> {
    Ok(multi_raw(n, p, n_h, eps_prime)?.min(1.0))
}

fn multi_raw(n: usize, p: usize, n_h: usize, eps_prime: f64) -> Result<f64, RcpError> {
    if !(eps_prime > 0.0 && eps_prime <= 1.0) {
        return Err(RcpError::Domain(format!("epsilon' = {eps_prime} not in (0, 1]")));
    }
    if p + 2 >= n {
        return Err(RcpError::HypothesisViolated { n, p });
    }
    let (eb, _) = epsilon_bar(n, p + 2)?;
    Ok(eb * n_h as f64 / eps_prime)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcpCertificate {
    pub n: usize,
    /// Feature dimension entering the Helly bound (`2p` for two regions).
    pub p: usize,
    pub n_h: usize,
    pub epsilon: f64,
    pub bound: f64,
    /// Value before clamping to `[0, 1]`.
    pub raw_bound: f64,
    pub kind: CertificateKind,
}

impl RcpCertificate {
    pub fn compute(n: usize, p: usize, n_h: usize, epsilon: f64) -> Result<Self, RcpError> {
        let (kind, raw) = if n_h == 1 {
            (CertificateKind::Single, single_bound(n, p, epsilon)?)
        } else {
            (CertificateKind::Multi, multi_raw(n, p, n_h, epsilon)?)
        };
        let bound = raw.clamp(0.0, 1.0);
        if bound != raw {
            log::info!("certificate bound {raw} clamped to {bound} (N={n}, p={p}, N_h={n_h}, eps={epsilon})");
        }
        Ok(Self { n, p, n_h, epsilon, bound, raw_bound: raw, kind })
    }
}

/// Order-independent fingerprint of a snapshot batch.
pub fn batch_fingerprint(batch: &[Snapshot]) -> String {
    let mut rows: Vec<Vec<u8>> = batch
        .iter()
        .map(|s| {
            let mut b = Vec::new();
            b.extend(s.y.sign().to_le_bytes());
            for v in s.x.iter().chain(&s.d).chain(std::iter::once(&s.weight)) {
                b.extend(v.to_le_bytes());
            }
            b
        })
        .collect();
    rows.sort();
    let mut h = Sha256::new();
    for r in rows {
        h.update(&r);
    }
    hex::encode(h.finalize())
}

/// Certificate for `bound` against the positive batch it was fitted on.
/// Refuses batches that were also used to tune κ.
pub fn certify(bound: &ReactiveBound, batch: &[Snapshot], epsilon: f64) -> Result<RcpCertificate, RcpError> {
    let fp = batch_fingerprint(batch);
    if bound.provenance.kappa_tuned_on.as_deref() == Some(fp.as_str()) {
        return Err(RcpError::KappaTunedOnBatch);
    }
    if let Some(fitted) = &bound.provenance.fitted_on {
        if *fitted != fp {
            return Err(RcpError::BatchMismatch);
        }
    }
    let n = batch.len();
    let p = bound.helly_feature_dim();
    if p + 2 >= n {
        return Err(RcpError::HypothesisViolated { n, p });
    }
    let n_h = bound.hyperplane_count();
    let single = n_h == 1 && bound.regions.len() == 1;
    if single {
        RcpCertificate::compute(n, p, 1, epsilon)
    } else {
        // A lone piecewise hyperplane still goes through the multi form.
        let raw = multi_raw(n, p, n_h, epsilon)?;
        let bound_v = raw.clamp(0.0, 1.0);
        if bound_v != raw {
            log::info!("certificate bound {raw} clamped to {bound_v}");
        }
        Ok(RcpCertificate { n, p, n_h, epsilon, bound: bound_v, raw_bound: raw, kind: CertificateKind::Multi })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_values_are_exact() {
        assert_eq!(phi(0.0, 3, 10).unwrap(), 1.0);
        assert_eq!(phi(1.0, 3, 10).unwrap(), 0.0);
        assert_eq!(phi(0.5, 10, 10).unwrap(), 1.0);
    }

    #[test]
    fn small_cdf_value() {
        // 0.9^20 + 20·0.1·0.9^19 + 190·0.01·0.9^18
        let exact = 0.9f64.powi(20) + 2.0 * 0.9f64.powi(19) + 1.9 * 0.9f64.powi(18);
        let v = phi(0.1, 2, 20).unwrap();
        assert!((v - exact).abs() < 1e-14 * exact);
        assert!((v - 0.6769).abs() < 1e-4);
    }

    #[test]
    fn domain_errors() {
        assert!(phi(-0.1, 1, 3).is_err());
        assert!(phi(0.5, 4, 3).is_err());
        assert!(matches!(single_bound(7, 5, 0.1), Err(RcpError::HypothesisViolated { .. })));
        assert!(multi_bound(100, 5, 1, 0.0).is_err());
    }

    #[test]
    fn single_bound_limits() {
        assert_eq!(single_bound(1000, 5, 1.0).unwrap(), 0.0);
        let a = single_bound(500, 5, 0.02).unwrap();
        let b = single_bound(1000, 5, 0.02).unwrap();
        assert!(b <= a);
    }

    #[test]
    fn epsilon_bar_full_support_is_one() {
        let (v, _) = epsilon_bar(20, 20).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multi_bound_scales_with_hyperplanes() {
        let (eb, _) = epsilon_bar(2000, 7).unwrap();
        assert!((multi_bound(2000, 5, 1, 1.0).unwrap() - eb).abs() < 1e-15);
        let one = multi_raw(20_000, 5, 1, 0.5).unwrap();
        let two = multi_raw(20_000, 5, 2, 0.5).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-15);
        let c = multi_bound(2000, 5, 3, 0.1).unwrap();
        assert!((c - (30.0 * eb).min(1.0)).abs() < 1e-12);
    }

    #[test]
    fn large_n_tail_stays_finite() {
        let l = ln_phi(0.5, 3, 1_000_000).unwrap();
        assert!(l.is_finite() && l < -600_000.0);
    }
}
