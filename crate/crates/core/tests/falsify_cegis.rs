use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rv_core::bench::{BenchmarkConfig, Problem};
use rv_core::cegis::{split_batches, verify_loop, LoopConfig, Verdict};
use rv_core::falsify::{falsify, rollout, AnnealingConfig};
use rv_core::learn::{learn_bound, ReactiveBound};
use rv_core::rcp::{certify, RcpError};
use rv_core::stl::satisfies;
use rv_core::trace::{Label, Snapshot, Trace};

fn robot() -> (BenchmarkConfig, Problem, Vec<Snapshot>) {
    let mut cfg = BenchmarkConfig::by_name("robot").unwrap();
    if let BenchmarkConfig::Robot(c) = &mut cfg {
        c.data.episodes = 12;
        c.learner.iterations = 30;
    }
    let problem = cfg.problem().unwrap();
    let traces = cfg.generate_positive(cfg.data_seed(), cfg.episodes()).unwrap();
    let positives = cfg.positive_snapshots(&traces);
    (cfg, problem, positives)
}

fn assert_within_bound(bound: &ReactiveBound, tr: &Trace) {
    for (i, s) in tr.samples().iter().enumerate() {
        let h = bound.evaluate_h(&s.x, &s.d);
        assert!(h >= -1e-6, "step {i}: h = {h}");
    }
}

#[test]
fn falsified_verdicts_revalidate() {
    let (_, problem, _) = robot();
    let sys = problem.closed_loop();
    let mut found = 0;
    for seed in 0..4 {
        let r = falsify(&sys, None, &problem.input, 400, seed, &AnnealingConfig::default()).unwrap();
        if r.falsified {
            found += 1;
            let tr = r.best_trace.as_ref().unwrap();
            assert!(!satisfies(&problem.spec, &problem.predicates, tr, 0).unwrap());
            assert!(r.best_robustness < 0.0);
        }
        assert!(r.evaluations <= 400);
    }
    assert!(found > 0, "unbounded robot environment should be falsifiable");
}

#[test]
fn falsification_is_reproducible() {
    let (_, problem, _) = robot();
    let sys = problem.closed_loop();
    let a = falsify(&sys, None, &problem.input, 60, 9, &AnnealingConfig::default()).unwrap();
    let b = falsify(&sys, None, &problem.input, 60, 9, &AnnealingConfig::default()).unwrap();
    assert_eq!(a.best_params, b.best_params);
    assert_eq!(a.best_robustness, b.best_robustness);
}

#[test]
fn rollouts_under_a_bound_stay_inside_it() {
    let (_, problem, positives) = robot();
    let sys = problem.closed_loop();
    let r = falsify(&sys, None, &problem.input, 400, 1, &AnnealingConfig::default()).unwrap();
    let negatives = problem.selector.extract(r.best_trace.as_ref().unwrap(), Label::Negative);
    let bound = learn_bound(&problem.learner, &positives, &negatives).unwrap().bound;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..30 {
        let params = problem.input.sample(&mut rng);
        if let Some(tr) = rollout(&sys, Some(&bound), &problem.input, &params).unwrap() {
            assert_within_bound(&bound, &tr);
            checked += 1;
        }
    }
    assert!(checked > 0);
    let under = falsify(&sys, Some(&bound), &problem.input, 300, 2, &AnnealingConfig::default()).unwrap();
    if let Some(tr) = &under.best_trace {
        assert_within_bound(&bound, tr);
        if under.falsified {
            assert!(!satisfies(&problem.spec, &problem.predicates, tr, 0).unwrap());
        }
    }
}

#[test]
fn loop_invariants_hold() {
    let (_, problem, positives) = robot();
    let cfg = LoopConfig { max_iterations: 4, budget: 400, seed: 3, ..LoopConfig::default() };
    let res = verify_loop(&problem, &positives, &cfg).unwrap();

    assert_eq!(res.iterations_used, res.records.len());
    assert!(res.records.len() <= cfg.max_iterations);
    for (i, rec) in res.records.iter().enumerate() {
        assert_eq!(rec.iteration, i + 1);
        assert_eq!(rec.seed, cfg.iteration_seed(i + 1));
        if let Some(h) = rec.min_positive_h {
            assert!(h >= -1e-6, "iteration {}: a fitted positive is excluded (h = {h})", rec.iteration);
        }
        if let Some(c) = &rec.certificate {
            assert!((0.0..=1.0).contains(&c.bound));
        }
    }
    let totals: Vec<usize> = res.records.iter().map(|r| r.negatives_total).collect();
    assert!(totals.windows(2).all(|w| w[0] <= w[1]));
    for tr in &res.counter_examples {
        assert!(!satisfies(&problem.spec, &problem.predicates, tr, 0).unwrap());
    }
    let last = res.records.last().unwrap();
    match res.verdict {
        Verdict::Verified => {
            assert!(!last.falsified);
            assert!(res.confirmatory.is_some());
            assert!(res.diagnosis.is_none());
        }
        Verdict::FalsifiedAtCap | Verdict::InherentlyUnsafe => {
            assert!(last.falsified);
            assert_eq!(res.records.len(), cfg.max_iterations);
            assert_eq!(res.diagnosis, Some(res.verdict == Verdict::InherentlyUnsafe));
        }
    }
    assert_eq!(res.verdict.exit_code(), match res.verdict {
        Verdict::Verified => 0,
        Verdict::FalsifiedAtCap => 2,
        Verdict::InherentlyUnsafe => 3,
    });

    // The last bound was fitted on the fit batch and must refuse the tuning batch.
    if let Some(bound) = &res.final_bound {
        let (tune, fit) = split_batches(&positives, cfg.split, cfg.split_seed);
        assert!(certify(bound, &fit, cfg.epsilon).is_ok());
        assert!(matches!(certify(bound, &tune, cfg.epsilon), Err(RcpError::KappaTunedOnBatch)));
    }
}

#[test]
fn loop_is_deterministic() {
    let (_, problem, positives) = robot();
    let cfg = LoopConfig { max_iterations: 2, budget: 150, seed: 5, confirm: false, ..LoopConfig::default() };
    let a = verify_loop(&problem, &positives, &cfg).unwrap();
    let b = verify_loop(&problem, &positives, &cfg).unwrap();
    let hashes = |r: &rv_core::cegis::VerificationResult| r.records.iter().map(|x| x.bound_hash.clone()).collect::<Vec<_>>();
    assert_eq!(a.verdict, b.verdict);
    assert_eq!(hashes(&a), hashes(&b));
}
