use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rv_core::learn::{autotune_piecewise_svm, AutotuneConfig, PiecewiseData};

/// Region values `g ∈ [-1, 1]`; the admissible `d` is `[-1, 0]` for `g < 0`
/// and `[0, 1]` for `g > 0`. Points come in mirrored pairs `(g, d)`,
/// `(-g, -d)`, so neither side of the split carries more negatives.
fn split_data(seed: u64, pairs: usize) -> PiecewiseData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut phi, mut g, mut positive) = (vec![], vec![], vec![]);
    for i in 0..pairs {
        let gi: f64 = rng.gen_range(0.0..1.0);
        let neg = i % 4 == 0;
        let d = if neg { -rng.gen_range(0.5..1.0) } else { rng.gen_range(0.0..1.0) };
        for s in [1.0, -1.0] {
            phi.push(vec![s * d]);
            g.push(s * gi);
            positive.push(!neg);
        }
    }
    let costs = vec![1.0; phi.len()];
    PiecewiseData { phi, g, positive, costs }
}

#[test]
fn recovers_true_split() {
    for seed in 0..3 {
        let data = split_data(seed, 120);
        let cfg = AutotuneConfig {
            gamma: 20.0,
            kappa0: 0.5,
            iterations: 60,
            n_h: 1,
            eps_active: 1e-3,
            eta0: None,
            negative_ratio: Some(3.0),
        };
        let res = autotune_piecewise_svm(&data, &cfg).unwrap();
        assert!(res.kappa.abs() <= 0.1, "seed {seed}: kappa = {}", res.kappa);
        let best = res.trajectory.iter().map(|s| s.objective).fold(f64::INFINITY, f64::min);
        let at_start = res.trajectory[0].objective;
        assert!(best <= at_start);
    }
}

