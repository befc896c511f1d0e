use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use rv_core::bench::{BenchmarkConfig, Problem};
use rv_core::cegis::{
    split_batches, verify_loop, ConfirmRun, IterationRecord, LoopConfig, PhaseTimes, Verdict,
};
use rv_core::falsify::{falsify, robustness_landscape};
use rv_core::learn::{learn_bound, learn_bound_two_batch, LearnError, ReactiveBound};
use rv_core::rcp::{RcpCertificate, RcpError};
use rv_core::trace::{load_snapshots, save_snapshots, save_traces, Snapshot, Trace, TraceSchema};

use crate::config::{resolve, RunConfig};
use crate::error::{read_error, CliError};
use crate::manifest::{read_manifests, Recorder};

/// Exit code of `rv falsify` when any seed falsifies.
pub const EXIT_FALSIFIED: i32 = 1;

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

pub struct Invocation {
    pub config_path: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

impl Invocation {
    fn config(&self) -> Result<(RunConfig, &Path), CliError> {
        let path = self.config_path.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
        Ok((RunConfig::load(path)?, path))
    }

    fn out(&self) -> Result<&Path, CliError> {
        let out = self.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))?;
        std::fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;
        Ok(out)
    }
}

/// Runs `body`, then appends the manifest with the resulting exit code.
fn recorded(
    mut rec: Recorder,
    body: impl FnOnce(&mut Recorder) -> Result<i32, CliError>,
) -> Result<i32, CliError> {
    match body(&mut rec) {
        Ok(code) => {
            rec.finish(code)?;
            Ok(code)
        }
        Err(e) => {
            let _ = rec.finish(e.exit_code());
            Err(e)
        }
    }
}

fn schema(problem: &Problem) -> TraceSchema {
    let m = problem.model.as_ref();
    TraceSchema { dt: m.dt(), n: m.state_dim(), m: m.control_dim(), k: m.disturbance_dim() }
}

fn save_trace_file(rec: &mut Recorder, out: &Path, name: &str, traces: &[Trace], schema: TraceSchema) -> Result<(), CliError> {
    let path = out.join(name);
    save_traces(traces, schema, &path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    rec.record(name)
}

fn learn_failed(e: LearnError) -> CliError {
    match e {
        LearnError::Config(_) | LearnError::Dimension(_) | LearnError::InvalidCost(_) | LearnError::NoPositives => {
            CliError::DataFormat(e.to_string())
        }
        other => CliError::Failed(other.to_string()),
    }
}

pub fn generate(inv: &Invocation) -> Result<i32, CliError> {
    let (cfg, path) = inv.config()?;
    let bench = cfg.benchmark()?.clone();
    let out = inv.out()?;
    let seeds = inv.seeds.clone().unwrap_or_else(|| vec![bench.data_seed()]);
    let rec = Recorder::new("generate", Some(path), Some(cfg.to_toml()), seeds.clone(), out);
    recorded(rec, |rec| {
        let problem = bench.problem()?;
        let sch = schema(&problem);
        for &seed in &seeds {
            let t = Instant::now();
            let traces = bench.generate_positive(seed, bench.episodes())?;
            rec.phase("generate", t.elapsed().as_secs_f64());
            save_trace_file(rec, out, &format!("traces-seed{seed}.csv"), &traces, sch)?;
            let snaps = bench.positive_snapshots(&traces);
            let name = format!("snapshots-seed{seed}.csv");
            let p = out.join(&name);
            save_snapshots(&snaps, sch.n, sch.k, &p).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
            rec.record(&name)?;
        }
        Ok(0)
    })
}

fn load_all(config_path: &Path, files: &[PathBuf]) -> Result<Vec<Snapshot>, CliError> {
    let mut out = Vec::new();
    for f in files {
        let p = resolve(config_path, f);
        out.extend(load_snapshots(&p).map_err(|e| read_error(&p, e))?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct LearnLog {
    objectives: Vec<f64>,
    kappa: Option<f64>,
    kappa_trajectory: Vec<rv_core::learn::KappaStep>,
    positives: usize,
    negatives: usize,
}

pub fn learn(inv: &Invocation) -> Result<i32, CliError> {
    let (cfg, path) = inv.config()?;
    let out = inv.out()?;
    let rec = Recorder::new("learn", Some(path), Some(cfg.to_toml()), vec![], out);
    recorded(rec, |rec| {
        let section = cfg.learn.as_ref().ok_or_else(|| CliError::Usage("the config has no [learn] table".into()))?;
        let learner = match (&section.learner, &cfg.benchmark) {
            (Some(l), _) => l.clone(),
            (None, Some(b)) => b.problem()?.learner,
            (None, None) => return Err(CliError::Usage("[learn] needs a learner table or a [benchmark]".into())),
        };
        let positives = load_all(path, &section.positives)?;
        let negatives = load_all(path, &section.negatives)?;
        let t = Instant::now();
        let outcome = match section.tune_fraction {
            Some(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(CliError::DataFormat(format!("tune_fraction {f} not in (0, 1)")));
                }
                let (tune, fit) = split_batches(&positives, f, section.split_seed);
                learn_bound_two_batch(&learner, &tune, &fit, &negatives)
            }
            None => learn_bound(&learner, &positives, &negatives),
        }
        .map_err(learn_failed)?;
        rec.phase("learn", t.elapsed().as_secs_f64());
        rec.write("bound.json", outcome.bound.to_json().as_bytes())?;
        let log = LearnLog {
            objectives: outcome.objectives,
            kappa: learner.piecewise().then_some(outcome.bound.kappa),
            kappa_trajectory: outcome.kappa_trajectory,
            positives: positives.len(),
            negatives: negatives.len(),
        };
        rec.write("learn_log.json", serde_json::to_string_pretty(&log).unwrap().as_bytes())?;
        let mut csv = String::from("step,kappa,objective,gradient\n");
        for (i, s) in log.kappa_trajectory.iter().enumerate() {
            let _ = writeln!(csv, "{i},{},{},{}", s.kappa, s.objective, s.gradient);
        }
        rec.write("kappa.csv", csv.as_bytes())?;
        Ok(0)
    })
}

fn load_bound(config_path: &Path, p: &Path) -> Result<ReactiveBound, CliError> {
    let p = resolve(config_path, p);
    let text = std::fs::read_to_string(&p).map_err(|_| CliError::MissingInput(p.display().to_string()))?;
    ReactiveBound::from_json(&text).map_err(|e| CliError::DataFormat(format!("{}: {e}", p.display())))
}

#[derive(Debug, Serialize, Deserialize)]
struct FalsifyReport {
    seed: u64,
    verdict: String,
    robustness: f64,
    evaluations: usize,
    empty_projections: usize,
    trace: Option<String>,
}

pub fn falsify_cmd(inv: &Invocation) -> Result<i32, CliError> {
    let (cfg, path) = inv.config()?;
    let bench = cfg.benchmark()?.clone();
    let out = inv.out()?;
    let seeds = inv.seeds.clone().unwrap_or_else(|| vec![cfg.loop_cfg.seed]);
    let rec = Recorder::new("falsify", Some(path), Some(cfg.to_toml()), seeds.clone(), out);
    recorded(rec, |rec| {
        let problem = bench.problem()?;
        let bound = cfg.falsify.bound.as_deref().map(|b| load_bound(path, b)).transpose()?;
        let sys = problem.closed_loop();
        let mut any = false;
        for &seed in &seeds {
            let t = Instant::now();
            let r = falsify(&sys, bound.as_ref(), &problem.input, cfg.falsify.budget, seed, &cfg.falsify.annealing)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            rec.phase("falsify", t.elapsed().as_secs_f64());
            any |= r.falsified;
            let trace = match &r.best_trace {
                Some(tr) => {
                    let name = format!("falsify-seed{seed}-trace.csv");
                    save_trace_file(rec, out, &name, std::slice::from_ref(tr), schema(&problem))?;
                    Some(name)
                }
                None => None,
            };
            let report = FalsifyReport {
                seed,
                verdict: if r.falsified { "falsified" } else { "not-falsified" }.into(),
                robustness: r.best_robustness,
                evaluations: r.evaluations,
                empty_projections: r.empty_projections,
                trace,
            };
            rec.write(&format!("falsify-seed{seed}.json"), serde_json::to_string_pretty(&report).unwrap().as_bytes())?;
            if cfg.falsify.landscape_samples > 0 {
                let t = Instant::now();
                let pts = robustness_landscape(&sys, bound.as_ref(), &problem.input, cfg.falsify.landscape_samples, seed)
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                rec.phase("landscape", t.elapsed().as_secs_f64());
                let dim = problem.input.dim();
                let mut csv = (0..dim).map(|i| format!("q{i}")).collect::<Vec<_>>().join(",");
                csv.push_str(",robustness\n");
                for (q, rho) in pts {
                    for v in q {
                        let _ = write!(csv, "{v},");
                    }
                    let _ = writeln!(csv, "{rho}");
                }
                rec.write(&format!("landscape-seed{seed}.csv"), csv.as_bytes())?;
            }
        }
        Ok(if any { EXIT_FALSIFIED } else { 0 })
    })
}

/// Per-seed verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub benchmark: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub exit_code: i32,
    pub iterations_used: usize,
    pub budget: usize,
    pub positives: usize,
    pub certificate: Option<RcpCertificate>,
    pub records: Vec<IterationRecord>,
    pub confirmatory: Option<ConfirmRun>,
    pub diagnosis: Option<bool>,
    pub times: PhaseTimes,
    pub data_s: f64,
    pub total_s: f64,
    pub bound_file: Option<String>,
    pub counter_examples_file: Option<String>,
    /// Full TOML echo of the run configuration.
    pub config: String,
}

fn verdict_rank(code: i32) -> i32 {
    match code {
        0 => 0,
        2 => 1,
        _ => 2,
    }
}

pub fn verify(inv: &Invocation) -> Result<i32, CliError> {
    let (cfg, path) = inv.config()?;
    let bench = cfg.benchmark()?.clone();
    let out = inv.out()?;
    let seeds = inv.seeds.clone().unwrap_or_else(|| vec![cfg.loop_cfg.seed]);
    let echo = cfg.to_toml();
    let rec = Recorder::new("verify", Some(path), Some(echo.clone()), seeds.clone(), out);
    recorded(rec, |rec| {
        let problem = bench.problem()?;
        let t = Instant::now();
        let traces = bench.generate_positive(bench.data_seed(), bench.episodes())?;
        let positives = bench.positive_snapshots(&traces);
        let data_s = t.elapsed().as_secs_f64();
        rec.phase("generate", data_s);
        let mut worst = 0;
        for &seed in &seeds {
            let lc = LoopConfig { seed, ..cfg.loop_cfg.clone() };
            let res = verify_loop(&problem, &positives, &lc).map_err(|e| CliError::Failed(e.to_string()))?;
            for (name, s) in [
                ("falsify", res.times.falsify_s),
                ("learn", res.times.learn_s),
                ("certify", res.times.certify_s),
                ("diagnose", res.times.diagnose_s),
            ] {
                rec.phase(name, s);
            }
            let bound_file = match &res.final_bound {
                Some(b) => {
                    let name = format!("bound-seed{seed}.json");
                    rec.write(&name, b.to_json().as_bytes())?;
                    Some(name)
                }
                None => None,
            };
            let counter_examples_file = if res.counter_examples.is_empty() {
                None
            } else {
                let name = format!("counterexamples-seed{seed}.csv");
                save_trace_file(rec, out, &name, &res.counter_examples, schema(&problem))?;
                Some(name)
            };
            let code = res.verdict.exit_code();
            if verdict_rank(code) > verdict_rank(worst) {
                worst = code;
            }
            let report = RunReport {
                benchmark: res.benchmark,
                seed,
                verdict: res.verdict,
                exit_code: code,
                iterations_used: res.iterations_used,
                budget: res.budget,
                positives: positives.len(),
                certificate: res.certificate,
                records: res.records,
                confirmatory: res.confirmatory,
                diagnosis: res.diagnosis,
                times: res.times,
                data_s,
                total_s: res.total_s,
                bound_file,
                counter_examples_file,
                config: echo.clone(),
            };
            rec.write(&format!("run-seed{seed}.json"), serde_json::to_string_pretty(&report).unwrap().as_bytes())?;
            emit(&format!("seed {seed}: {:?} after {} iterations ({:.1}s)\n", report.verdict, report.iterations_used, report.total_s));
        }
        Ok(worst)
    })
}

pub fn cert(inv: &Invocation) -> Result<i32, CliError> {
    let (cfg, path) = inv.config()?;
    let c = cfg.cert.as_ref().ok_or_else(|| CliError::Usage("the config has no [cert] table".into()))?;
    let compute = || {
        RcpCertificate::compute(c.n, c.p, c.n_h, c.epsilon).map_err(|e| match e {
            RcpError::HypothesisViolated { .. } | RcpError::Domain(_) => CliError::DataFormat(e.to_string()),
            other => CliError::Failed(other.to_string()),
        })
    };
    let json = |cert: &RcpCertificate| serde_json::to_string_pretty(cert).unwrap();
    match &inv.out {
        None => {
            let cert = compute()?;
            emit(&format!("{}\n", json(&cert)));
            Ok(0)
        }
        Some(_) => {
            let out = inv.out()?;
            let rec = Recorder::new("cert", Some(path), Some(cfg.to_toml()), vec![], out);
            recorded(rec, |rec| {
                let cert = compute()?;
                let text = json(&cert);
                rec.write("cert.json", text.as_bytes())?;
                emit(&format!("{text}\n"));
                Ok(0)
            })
        }
    }
}

fn slice_csv(bound: &ReactiveBound, problem: &Problem, x: &[f64], grid: usize) -> String {
    let ranges = &problem.input.ranges;
    let k = ranges.lo.len();
    let mid: Vec<f64> = ranges.lo.iter().zip(&ranges.hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let axis = |j: usize, i: usize| {
        if grid <= 1 {
            mid[j]
        } else {
            ranges.lo[j] + (ranges.hi[j] - ranges.lo[j]) * i as f64 / (grid - 1) as f64
        }
    };
    let mut csv = String::new();
    if k >= 2 {
        csv.push_str("d0,d1,h\n");
        for i in 0..grid {
            for j in 0..grid {
                let mut d = mid.clone();
                d[0] = axis(0, i);
                d[1] = axis(1, j);
                let _ = writeln!(csv, "{},{},{}", d[0], d[1], bound.evaluate_h(x, &d));
            }
        }
    } else {
        csv.push_str("d0,h\n");
        for i in 0..grid {
            let d = vec![axis(0, i)];
            let _ = writeln!(csv, "{},{}", d[0], bound.evaluate_h(x, &d));
        }
    }
    csv
}

pub fn report(inv: &Invocation) -> Result<i32, CliError> {
    let dir = inv.out.as_deref().ok_or_else(|| CliError::Usage("--out must name the run directory".into()))?;
    let manifests = read_manifests(dir)?;
    let mut names: Vec<String> = manifests
        .iter()
        .filter(|m| m.command == "verify")
        .flat_map(|m| m.outputs.iter().map(|o| o.path.clone()))
        .filter(|p| p.starts_with("run-seed") && p.ends_with(".json"))
        .collect();
    names.sort();
    names.dedup();
    if names.is_empty() {
        return Err(CliError::MissingInput(format!("{}: no verification runs in the manifest", dir.display())));
    }
    let mut reports = Vec::new();
    for n in &names {
        let p = dir.join(n);
        let text = std::fs::read_to_string(&p).map_err(|_| CliError::MissingInput(p.display().to_string()))?;
        let r: RunReport =
            serde_json::from_str(&text).map_err(|e| CliError::DataFormat(format!("{}: {e}", p.display())))?;
        reports.push(r);
    }
    let override_cfg = match &inv.config_path {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let rec = Recorder::new(
        "report",
        inv.config_path.as_deref(),
        override_cfg.as_ref().map(RunConfig::to_toml),
        reports.iter().map(|r| r.seed).collect(),
        dir,
    );
    recorded(rec, |rec| {
        let mut summary = String::new();
        let mut rob = String::from("seed,iteration,robustness,falsified,evaluations\n");
        let mut kap = String::from("seed,iteration,step,kappa,objective,gradient\n");
        for r in &reports {
            let _ = writeln!(summary, "{} seed {}: {:?} after {} iterations", r.benchmark, r.seed, r.verdict, r.iterations_used);
            match &r.certificate {
                Some(c) => {
                    let _ = writeln!(
                        summary,
                        "  certificate: P(violation > {}) <= {:.3e} (N = {}, p = {}, N_h = {})",
                        c.epsilon, c.bound, c.n, c.p, c.n_h
                    );
                }
                None => summary.push_str("  certificate: none\n"),
            }
            if let Some(k) = r.records.iter().rev().find_map(|x| x.kappa) {
                let _ = writeln!(summary, "  kappa: {k:.6}");
            }
            if let Some(c) = &r.confirmatory {
                let _ = writeln!(summary, "  confirmatory run: {} (robustness {:.4})", if c.falsified { "falsified" } else { "clean" }, c.robustness);
            }
            let _ = writeln!(
                summary,
                "  time: {:.1}s total (falsify {:.1}s, learn {:.1}s, certify {:.3}s, diagnose {:.3}s)",
                r.total_s, r.times.falsify_s, r.times.learn_s, r.times.certify_s, r.times.diagnose_s
            );
            for x in &r.records {
                let _ = writeln!(rob, "{},{},{},{},{}", r.seed, x.iteration, x.robustness, x.falsified, x.evaluations);
                for (i, s) in x.kappa_trajectory.iter().enumerate() {
                    let _ = writeln!(kap, "{},{},{i},{},{},{}", r.seed, x.iteration, s.kappa, s.objective, s.gradient);
                }
            }
            if let Some(bf) = &r.bound_file {
                let cfg = match &override_cfg {
                    Some(c) => c.clone(),
                    None => RunConfig::parse(&r.config, Path::new("run config"))?,
                };
                let bench: BenchmarkConfig = cfg.benchmark()?.clone();
                let problem = bench.problem()?;
                let bound = load_bound(&dir.join("x"), Path::new(bf))?;
                let x = match &cfg.report.x {
                    Some(x) => x.clone(),
                    None => problem.input.initial.lo.iter().zip(&problem.input.initial.hi).map(|(a, b)| 0.5 * (a + b)).collect(),
                };
                if x.len() != problem.model.state_dim() {
                    return Err(CliError::DataFormat(format!("report state has {} entries, expected {}", x.len(), problem.model.state_dim())));
                }
                rec.write(&format!("bound-slice-seed{}.csv", r.seed), slice_csv(&bound, &problem, &x, cfg.report.grid).as_bytes())?;
            }
        }
        rec.write("summary.txt", summary.as_bytes())?;
        rec.write("robustness.csv", rob.as_bytes())?;
        rec.write("kappa_trajectory.csv", kap.as_bytes())?;
        emit(&summary);
        Ok(0)
    })
}
