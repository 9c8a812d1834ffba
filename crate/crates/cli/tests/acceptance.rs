//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion (the
//! stochastic ordering comparison prints `PASS` or `ADVISORY` and never
//! fails) and exits nonzero if any hard criterion fails.

use adavr::data::{self, synth_classification, ParseOptions};
use adavr::optimizers::{self, rng_from_seed, RunObserver, StepEvent};
use adavr::verify::{self, ScheduleKind};
use adavr::{AlgorithmKind, FeasibleRegion, LossKind, Objective, Params, ProxTerm, Region};
use rand::Rng;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

enum Outcome {
    Pass(String),
    Fail(String),
    Advisory(String),
}

fn pass_if(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_point(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..=scale)).collect()
}

fn synth(n: usize, d: usize, seed: u64, loss: LossKind<f64>, lambda: f64) -> Objective {
    Objective::new(synth_classification(n, d, seed).unwrap(), loss, lambda).unwrap()
}

fn ball(center: Vec<f64>, r: f64) -> Region {
    FeasibleRegion::ball(center, r).unwrap()
}

fn variance_bound() -> Outcome {
    let obj = synth(20, 5, 0, LossKind::Logistic, 0.05);
    let mut rng = rng_from_seed(101);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..200 {
        let x = random_point(&mut rng, 5, 3.0);
        let u = random_point(&mut rng, 5, 3.0);
        let (lhs, rhs) = verify::vr_check(&obj, &x, &u).unwrap();
        if lhs > rhs * (1.0 + 1e-9) {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    pass_if(violations == 0, format!("200 pairs, {violations} violations, max lhs/rhs = {worst:.4}"))
}

fn unbiasedness() -> Outcome {
    let obj = synth(20, 5, 0, LossKind::Logistic, 0.05);
    let mut rng = rng_from_seed(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_point(&mut rng, 5, 3.0);
        let u = random_point(&mut rng, 5, 3.0);
        worst = worst.max(verify::unbiasedness_gap(&obj, &x, &u).unwrap());
    }
    pass_if(worst <= 1e-10, format!("100 pairs, max deviation {worst:.3e} (tol 1e-10)"))
}

fn gradient_correctness() -> Outcome {
    let mut rng = rng_from_seed(303);
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, loss, tol) in [
        ("logistic", LossKind::Logistic, 1e-6),
        ("huber", LossKind::Huber { delta: 1.0 }, 1e-6),
        ("squared", LossKind::Squared, 1e-9),
    ] {
        let obj = synth(30, 6, 4, loss, 0.05);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let x = random_point(&mut rng, 6, 2.0);
            let rep = verify::fd_check(&obj, &x, tol).unwrap();
            ok &= rep.passed;
            worst = worst.max(rep.max_error);
        }
        parts.push(format!("{name} {worst:.2e}/{tol:e}"));
    }
    pass_if(ok, format!("50 points each: {}", parts.join(", ")))
}

fn schedule_audit() -> Outcome {
    let mut failures = Vec::new();
    for n in [1usize, 10, 100, 1_000, 1_000_000] {
        for kind in [ScheduleKind::AdaVrae, ScheduleKind::AdaVrag] {
            let rep = verify::schedule_audit(kind, n, 60).unwrap();
            for c in rep.checks.iter().filter(|c| !c.passed) {
                failures.push(format!("{kind} n={n} {} at s={:?}", c.name, c.first_violation));
            }
        }
    }
    let detail = if failures.is_empty() {
        "both schedules, n in {1,10,100,1e3,1e6}, s = 1..60".to_string()
    } else {
        failures.join("; ")
    };
    pass_if(failures.is_empty(), detail)
}

fn gradient_accounting() -> Outcome {
    let mut mismatches = Vec::new();
    for (n, epochs) in [(50usize, 3usize), (128, 5)] {
        let obj = synth(n, 4, 1, LossKind::Logistic, 1.0 / n as f64);
        let u0 = vec![1.0; 4];
        let region = ball(u0.clone(), 100.0);
        let (nn, s) = (n as u64, epochs as u64);
        for (kind, expected) in [
            (AlgorithmKind::AdaVragI, 3 * nn * s),
            (AlgorithmKind::AdaVragII, 3 * nn * s),
            (AlgorithmKind::AdaVrae, nn + (s - 1) * (2 * (nn - 1) + nn) + 2 * (nn - 1)),
        ] {
            let p = Params { epochs, seed: 5, ..Params::default() };
            let got = optimizers::run(&obj, &region, &ProxTerm::Zero, kind, &u0, &p).unwrap().final_grads();
            if got != expected {
                mismatches.push(format!("{kind} (n={n}, S={epochs}): {got} != {expected}"));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        "(50,3) and (128,5) match the closed forms exactly".to_string()
    } else {
        mismatches.join("; ")
    };
    pass_if(mismatches.is_empty(), detail)
}

#[derive(Default)]
struct StepLog {
    increments: f64,
    last_gamma: Option<f64>,
    monotone: bool,
    max_excess: f64,
    center: Vec<f64>,
    radius: f64,
}

impl StepLog {
    fn new(center: &[f64], radius: f64) -> Self {
        Self { monotone: true, center: center.to_vec(), radius, ..Self::default() }
    }

    fn excess(&mut self, p: &[f64]) {
        let d = p.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        self.max_excess = self.max_excess.max(d - self.radius);
    }
}

impl RunObserver<f64> for StepLog {
    fn on_step(&mut self, e: &StepEvent<'_, f64>) {
        self.increments += e.increment;
        if let Some(prev) = self.last_gamma {
            self.monotone &= prev <= e.gamma;
        }
        self.monotone &= e.gamma_prev <= e.gamma;
        self.last_gamma = Some(e.gamma);
        self.excess(e.x);
        if let Some(z) = e.z {
            self.excess(z);
        }
    }
}

fn adaptive_identities() -> Outcome {
    let obj = synth(60, 8, 3, LossKind::Logistic, 1.0 / 60.0);
    let u0 = adavr::harness::init_point(8, 3);
    let r = 100.0;
    let region = ball(u0.clone(), r);
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in AlgorithmKind::ALL {
        let p = Params { epochs: 10, seed: 9, step_size: Some(0.5), ..Params::default() };
        let mut log = StepLog::new(&u0, r);
        optimizers::run_observed(&obj, &region, &ProxTerm::Zero, kind, &u0, &p, &mut log).unwrap();
        let eta = r;
        let gamma = log.last_gamma.unwrap();
        match kind {
            AlgorithmKind::AdaVrae => {
                let lhs = eta * eta * gamma * gamma;
                let rhs = eta * eta * p.gamma0 * p.gamma0 + log.increments;
                let rel = (lhs - rhs).abs() / rhs;
                ok &= rel <= 1e-8;
                parts.push(format!("AdaVRAE telescoping rel err {rel:.1e}"));
            }
            AlgorithmKind::AdaVragII => {
                let err = (gamma - (p.gamma0 + log.increments / (eta * eta))).abs();
                ok &= err <= 1e-10;
                parts.push(format!("AdaVRAG-II telescoping err {err:.1e}"));
            }
            _ => {}
        }
        if kind.is_adaptive() {
            ok &= log.monotone;
            if !log.monotone {
                parts.push(format!("{kind} step decreased"));
            }
        }
        ok &= log.max_excess <= 1e-9;
        if log.max_excess > 1e-9 {
            parts.push(format!("{kind} left the ball by {:.1e}", log.max_excess));
        }
    }
    parts.push("steps nondecreasing, iterates feasible".into());
    pass_if(ok, parts.join(", "))
}

struct Desk {
    obj: Objective,
    x_star: Vec<f64>,
    f_star: f64,
    certified_gap: f64,
}

fn desk_problem(u0: &[f64]) -> (Objective, Region) {
    let obj = synth(500, 20, 0, LossKind::Logistic, 1.0 / 500.0);
    (obj, ball(u0.to_vec(), 100.0))
}

fn desk() -> Desk {
    let u0 = adavr::harness::init_point(20, 0);
    let (obj, region) = desk_problem(&u0);
    let sol = verify::reference_solution(&obj, &region, &ProxTerm::Zero, 1e-9).unwrap();
    Desk { obj, x_star: sol.x_star, f_star: sol.f_star, certified_gap: sol.certified_gap }
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn convergence(desk: &Desk) -> Outcome {
    let kinds = [
        AlgorithmKind::AdaVrae,
        AlgorithmKind::AdaVragI,
        AlgorithmKind::AdaVragII,
        AlgorithmKind::Vrae,
        AlgorithmKind::Vrag,
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in kinds {
        let mut worst = f64::NEG_INFINITY;
        for seed in SEEDS {
            let u0 = adavr::harness::init_point(20, seed);
            // one reference serves every seed only if x* is interior to each ball
            let slack = 100.0 - u0.iter().zip(&desk.x_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if slack <= 0.0 {
                ok = false;
                parts.push(format!("seed {seed}: reference minimizer outside the ball"));
            }
            let region = ball(u0.clone(), 100.0);
            let p = Params { epochs: 100, seed, ..Params::default() };
            let trace = optimizers::run(&desk.obj, &region, &ProxTerm::Zero, kind, &u0, &p).unwrap();
            let gap = trace.final_objective() - desk.f_star;
            worst = worst.max(gap);
            let decreased = trace.entries[30].objective < trace.entries[1].objective;
            if gap > 1e-4 || !decreased {
                ok = false;
                parts.push(format!("{kind} seed {seed}: gap {gap:.2e}, epoch30<epoch1 = {decreased}"));
            }
        }
        parts.push(format!("{kind} worst gap {worst:.1e}"));
    }
    parts.push(format!("F* certified to {:.1e}", desk.certified_gap));
    pass_if(ok, parts.join(", "))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn ordering(desk: &Desk) -> Outcome {
    let budget = 3 * 500 * 50u64;
    let at_budget = |trace: &adavr::RunTrace| -> f64 {
        trace.entries.iter().filter(|e| e.grads <= budget).map(|e| e.objective).next_back().unwrap() - desk.f_star
    };
    let mut ada = Vec::new();
    let mut svrg_by_step: Vec<(f64, Vec<f64>)> = Vec::new();
    for step in [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 100.0] {
        svrg_by_step.push((step, Vec::new()));
    }
    for seed in SEEDS {
        let u0 = adavr::harness::init_point(20, seed);
        let region = ball(u0.clone(), 100.0);
        let p = Params { epochs: 50, seed, ..Params::default() };
        let t = optimizers::run(&desk.obj, &region, &ProxTerm::Zero, AlgorithmKind::AdaVragII, &u0, &p).unwrap();
        ada.push(at_budget(&t));
        for (step, subs) in svrg_by_step.iter_mut() {
            let p = Params { epochs: 50, seed, step_size: Some(*step), ..Params::default() };
            let t = optimizers::run(&desk.obj, &region, &ProxTerm::Zero, AlgorithmKind::Svrg, &u0, &p).unwrap();
            let v = at_budget(&t);
            subs.push(if v.is_finite() { v } else { f64::INFINITY });
        }
    }
    let (best_step, best) = svrg_by_step
        .iter()
        .map(|(s, v)| (*s, v.clone()))
        .min_by(|a, b| median(a.1.clone()).total_cmp(&median(b.1.clone())))
        .unwrap();
    let ada_med = median(ada.clone());
    let svrg_med = median(best.clone());
    // gaps within rounding of F* count as ties, which the criterion allows
    const TIE: f64 = 1e-12;
    let wins = ada.iter().zip(&best).filter(|(a, s)| **a <= **s + TIE).count();
    let tie = (ada_med - svrg_med).abs() <= TIE;
    let detail = format!(
        "median AdaVRAG-II {ada_med:.3e} vs tuned SVRG (step {best_step}) {svrg_med:.3e}{}, seeds not worse {wins}/3",
        if tie { " (tie at rounding level)" } else { "" }
    );
    if ada_med <= svrg_med + TIE && wins >= 2 {
        Outcome::Pass(detail)
    } else {
        Outcome::Advisory(detail)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_adavr");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}.csv"));
        let status = Command::new(bin)
            .args([
                "run", "--data", "synth:120,6", "--algo", "adavrae", "--algo", "adavrag-i", "--algo", "adavrag-ii",
                "--algo", "vrae", "--algo", "vrag", "--algo", "svrg", "--algo", "svrg++", "--step", "0.5",
                "--epochs", "15", "--reps", "3", "--seed", "7", "--out",
            ])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome::Fail(format!("run exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(std::fs::read(&out).unwrap());
    }
    let rows = outputs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    pass_if(outputs[0] == outputs[1], format!("two CLI runs, {rows} rows, {} bytes each", outputs[0].len()))
}

fn parser_fixtures() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let opts = ParseOptions::default();
    let mut problems = Vec::new();
    match (data::load_libsvm::<f64>(dir.join("small.svm"), opts), std::fs::read_to_string(dir.join("small.golden.svm"))) {
        (Ok((ds, _)), Ok(golden)) => {
            let mut buf = Vec::new();
            data::write_libsvm(&ds, &mut buf).unwrap();
            if buf != golden.as_bytes() {
                problems.push("small.svm does not serialize to its golden file".to_string());
            }
            match data::parse_libsvm_with::<f64, _>(buf.as_slice(), ParseOptions { min_dim: Some(ds.dim()) }) {
                Ok((back, _)) if back == ds => {}
                _ => problems.push("small.svm does not round-trip".to_string()),
            }
        }
        _ => problems.push("small.svm fixture unreadable".to_string()),
    }
    let cases = [
        ("bad_order.svm", 4),
        ("zero_index.svm", 3),
        ("float_label.svm", 3),
        ("bad_value.svm", 2),
        ("unknown_label.svm", 2),
    ];
    for (name, line) in cases {
        match data::load_libsvm::<f64>(dir.join(name), opts) {
            Err(e) if e.line() == Some(line) => {}
            other => problems.push(format!("{name}: expected error at line {line}, got {:?}", other.err())),
        }
    }
    let detail = if problems.is_empty() {
        format!("golden round trip plus {} error fixtures with correct lines", cases.len())
    } else {
        problems.join("; ")
    };
    pass_if(problems.is_empty(), detail)
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Advisory(d) => ("ADVISORY", d),
        };
        println!("{tag:<8} {name:<28} [{secs:6.2}s] {detail}");
    };

    println!("acceptance criteria");
    let t = Instant::now();
    report("variance_reduction_bound", t, variance_bound());
    let t = Instant::now();
    report("estimator_unbiased", t, unbiasedness());
    let t = Instant::now();
    report("gradient_correctness", t, gradient_correctness());
    let t = Instant::now();
    report("schedule_audit", t, schedule_audit());
    let t = Instant::now();
    report("gradient_accounting", t, gradient_accounting());
    let t = Instant::now();
    report("adaptive_step_identities", t, adaptive_identities());
    let t = Instant::now();
    let reference = desk();
    report("desk_scale_convergence", t, convergence(&reference));
    let t = Instant::now();
    report("accelerated_vs_svrg", t, ordering(&reference));
    let t = Instant::now();
    report("cli_determinism", t, determinism());
    let t = Instant::now();
    report("parser_golden_files", t, parser_fixtures());

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all hard acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
