use proptest::prelude::*;
use rv_core::learn::{kappa_objective_gradient, membership};

fn objective(v: &[f64], c: f64, phi: &[Vec<f64>], g: &[f64], costs: &[f64], kappa: f64, gamma: f64) -> f64 {
    let p = phi[0].len();
    phi.iter()
        .zip(g)
        .zip(costs)
        .map(|((f, &gi), k)| {
            let (m1, m2) = membership(gi, kappa, gamma);
            let s: f64 = (0..p).map(|j| (m1 * v[j] + m2 * v[p + j]) * f[j]).sum();
            k * (s + c)
        })
        .sum()
}

fn instance() -> impl Strategy<Value = (Vec<f64>, f64, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64, f64)> {
    (1usize..4, 2usize..15).prop_flat_map(|(p, n)| {
        (
            prop::collection::vec(-1.0..1.0f64, 2 * p),
            -1.0..1.0f64,
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, p), n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(0.1..2.0f64, n),
            -0.5..0.5f64,
            0.5..30.0f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_central_differences((v, c, phi, g, costs, kappa, gamma) in instance()) {
        let an = kappa_objective_gradient(&v, &phi, &g, &costs, kappa, gamma);
        let f = |k: f64| objective(&v, c, &phi, &g, &costs, k, gamma);
        // Fourth-order central difference.
        let h = 1e-3 / gamma;
        let fd = (8.0 * (f(kappa + h) - f(kappa - h)) - (f(kappa + 2.0 * h) - f(kappa - 2.0 * h))) / (12.0 * h);
        // Saturated memberships give gradients below the difference quotient's round-off.
        let scale = an.abs().max(fd.abs()).max(1e-6);
        prop_assert!((an - fd).abs() <= 1e-4 * scale, "analytic {} vs fd {}", an, fd);
    }
}
