mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rv_core::learn::{solve_l1_svm, SvmData};

use common::*;

pub fn instance(seed: u64) -> SvmData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.gen_range(1..=2);
    let n = rng.gen_range(2..=12);
    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let mut positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
    positive[0] = true;
    let costs = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
    SvmData::new(features, positive, costs).unwrap()
}

#[test]
fn matches_grid_oracle_on_small_instances() {
    for seed in 0..50 {
        let data = instance(seed);
        let sol = solve_l1_svm(&data).unwrap();
        let oracle = svm_grid_oracle(&data.features, &data.positive, &data.costs);
        let norm = sol.v.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1.0 + 1e-9, "seed {seed}: ‖v‖ = {norm}");
        assert!((sol.objective - oracle).abs() <= 1e-3, "seed {seed}: solver {} vs grid {oracle}", sol.objective);
        for (i, m) in sol.slack.iter().enumerate() {
            if data.positive[i] {
                assert!(*m >= -1e-8, "seed {seed}: positive slack {m}");
            }
        }
    }
}

#[test]
fn reported_objective_is_the_weighted_slack_sum() {
    for seed in 100..120 {
        let data = instance(seed);
        let sol = solve_l1_svm(&data).unwrap();
        let direct: f64 = data
            .features
            .iter()
            .zip(&data.costs)
            .map(|(f, k)| k * (sol.v.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + sol.c))
            .sum();
        assert!((direct - sol.objective).abs() <= 1e-9 * (1.0 + direct.abs()));
    }
}
