mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rv_core::stl::{boolean_signal, evaluate, robustness, robustness_signal, satisfies, Formula};

use common::*;

fn case(seed: u64) -> (Formula, rv_core::trace::Trace, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_formula(&mut rng, 4);
    let extra = rng.gen_range(0..4);
    let len = brute_horizon(&f) + 1 + extra;
    let tr = random_stl_trace(&mut rng, len);
    let t = rng.gen_range(0..=extra);
    (f, tr, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn robustness_sign_matches_brute_force(seed in any::<u64>()) {
        let (f, tr, t) = case(seed);
        let preds = stl_predicates();
        let rho = robustness(&f, &preds, &tr, t).unwrap();
        let sat = brute_sat(&f, &tr, t);
        if rho.abs() > 1e-9 {
            prop_assert_eq!(rho > 0.0, sat, "{} at t={}: rho={}", f, t, rho);
        }
        prop_assert_eq!(satisfies(&f, &preds, &tr, t).unwrap(), sat, "{}", f);
    }

    #[test]
    fn signals_agree_with_pointwise_queries(seed in any::<u64>()) {
        let (f, tr, _) = case(seed);
        let preds = stl_predicates();
        let rs = robustness_signal(&f, &preds, &tr);
        let bs = boolean_signal(&f, &preds, &tr);
        let last = tr.len() - 1 - brute_horizon(&f);
        for t in 0..=last {
            let e = evaluate(&f, &preds, &tr, t).unwrap();
            prop_assert_eq!(e.robustness, rs[t]);
            prop_assert_eq!(bs[t], brute_sat(&f, &tr, t));
        }
    }

    #[test]
    fn negation_flips_robustness(seed in any::<u64>()) {
        let (f, tr, t) = case(seed);
        let preds = stl_predicates();
        let a = robustness(&f, &preds, &tr, t).unwrap();
        let b = robustness(&Formula::not(f), &preds, &tr, t).unwrap();
        prop_assert_eq!(a, -b);
    }
}

#[test]
fn short_trace_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = Formula::eventually(0.0, 2.0, Formula::pred("p")).unwrap();
    let tr = random_stl_trace(&mut rng, 4);
    assert!(robustness(&f, &stl_predicates(), &tr, 0).is_err());
}
