//! Independent oracles and checkable conditions of the convergence analysis.
//!
//! Nothing here calls into [`crate::optimizers`]: the reference solver is a
//! plain proximal gradient loop over the problem and geometry primitives.

use crate::geometry::{FeasibleRegion, ProxTerm};
use crate::linalg;
use crate::problem::{FiniteSum, LossKind, FiniteSumObjective, Point, ProblemError};
use crate::schedules::{
    self, accumulator_epoch_init, accumulator_step, adavrag_c, s0_of, ScheduleError, ADAVRAE_A_INIT,
    ADAVRAE_C,
};
use crate::data::synth_classification;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("reference solver did not reach tolerance {tol:e} within {iterations} iterations (residual {residual:e})")]
    NoConvergence { tol: f64, iterations: usize, residual: f64 },
    #[error("reference solver needs a positive smoothness constant")]
    DegenerateSmoothness,
    #[error("region and composite term describe different sets")]
    IncompatibleDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Point<f64>,
    pub f_star: f64,
    /// Upper bound on `F(x_star) − min F`; infinite on unbounded domains.
    pub certified_gap: f64,
    pub iterations: usize,
}

pub const DEFAULT_REFERENCE_ITERATIONS: usize = 500_000;

pub fn reference_solution<P: FiniteSum<f64> + ?Sized>(
    problem: &P,
    region: &FeasibleRegion<f64>,
    h: &ProxTerm<f64>,
    tol: f64,
) -> Result<ReferenceSolution, VerifyError> {
    reference_solution_with(problem, region, h, tol, None, DEFAULT_REFERENCE_ITERATIONS)
}

/// Proximal gradient descent with step `1/β` from `start` (or the region
/// center), stopped once the gradient mapping `β‖x − x⁺‖` is at most `tol`.
///
/// The returned point is the last `x⁺`, for which
/// `F(x⁺) − F* ≤ β‖x − x⁺‖·D`.
pub fn reference_solution_with<P: FiniteSum<f64> + ?Sized>(
    problem: &P,
    region: &FeasibleRegion<f64>,
    h: &ProxTerm<f64>,
    tol: f64,
    start: Option<&[f64]>,
    max_iter: usize,
) -> Result<ReferenceSolution, VerifyError> {
    let domain = match (region, h) {
        (FeasibleRegion::Unconstrained, t) => t.clone(),
        (r, ProxTerm::Zero) => ProxTerm::indicator(r.clone())?,
        (r, ProxTerm::Indicator { region: inner }) if r == inner => h.clone(),
        _ => return Err(VerifyError::IncompatibleDomain),
    };
    let set = domain.region();
    let beta = problem.smoothness_bound();
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(VerifyError::DegenerateSmoothness);
    }
    let step = 1.0 / beta;
    let mut x = match (start, &set) {
        (Some(s), _) => set.project(s),
        (None, FeasibleRegion::Ball { center, .. }) => center.clone(),
        (None, FeasibleRegion::Unconstrained) => vec![0.0; problem.dim()],
    };
    problem.check_point(&x)?;
    let diameter = set.diameter().unwrap_or(f64::INFINITY);

    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let g = problem.full_grad(&x)?;
        let trial = linalg::lincomb(1.0, &x, -step, &g);
        let next = domain.prox(&trial, step)?;
        residual = beta * linalg::dist(&x, &next);
        x = next;
        if residual <= tol {
            return Ok(ReferenceSolution {
                f_star: problem.full_value(&x)?,
                x_star: x,
                certified_gap: diameter * residual,
                iterations: it,
            });
        }
    }
    Err(VerifyError::NoConvergence { tol, iterations: max_iter, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_error: f64,
    pub passed: bool,
}

const FD_SAMPLE: usize = 20;

/// Compares analytic component gradients with central differences at `x`.
///
/// Checks up to 20 components (all of them when `n ≤ 20`, otherwise a fixed
/// pseudo-random subset). The error is `|analytic − numeric| / (1 + |analytic|)`
/// maximised over components and coordinates. The step is
/// `1e-5·(1 + |x_j|)`; if that misses, a ten times smaller step is also
/// tried, which keeps differences that straddle a curvature kink accurate.
pub fn fd_check<P: FiniteSum<f64> + ?Sized>(problem: &P, x: &[f64], rel_tol: f64) -> Result<FdReport, VerifyError> {
    problem.check_point(x)?;
    let n = problem.num_components();
    let components: Vec<usize> = if n <= FD_SAMPLE {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        (0..FD_SAMPLE).map(|_| rng.random_range(0..n)).collect()
    };
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for &i in &components {
        let grad = problem.component_grad(i, x)?;
        for j in 0..x.len() {
            let mut central = |h: f64| {
                probe[j] = x[j] + h;
                let up = problem.value_unchecked(i, &probe);
                probe[j] = x[j] - h;
                let down = problem.value_unchecked(i, &probe);
                probe[j] = x[j];
                let numeric = (up - down) / (2.0 * h);
                (grad[j] - numeric).abs() / (1.0 + grad[j].abs())
            };
            let h = 1e-5 * (1.0 + x[j].abs());
            let mut err = central(h);
            if err > rel_tol {
                err = err.min(central(h / 10.0));
            }
            worst = worst.max(err);
        }
    }
    Ok(FdReport { max_error: worst, passed: worst <= rel_tol })
}

/// Both sides of the variance bound
/// `(1/n) Σ_i ‖g_i − ∇f(x)‖² ≤ 2β (f(u) − f(x) − ⟨∇f(x), u − x⟩)`
/// for the estimator `g_i = ∇f_i(x) − ∇f_i(u) + ∇f(u)`.
pub fn vr_check<P: FiniteSum<f64> + ?Sized>(problem: &P, x: &[f64], u: &[f64]) -> Result<(f64, f64), VerifyError> {
    let n = problem.num_components();
    let grad_x = problem.full_grad(x)?;
    let grad_u = problem.full_grad(u)?;
    let mut lhs = 0.0;
    for i in 0..n {
        let g = problem.vr_gradient(i, x, u, &grad_u)?;
        lhs += linalg::dist_sq(&g, &grad_x);
    }
    lhs /= n as f64;
    let diff = linalg::sub(u, x);
    let bregman = problem.full_value(u)? - problem.full_value(x)? - linalg::dot(&grad_x, &diff);
    Ok((lhs, 2.0 * problem.smoothness_bound() * bregman))
}

/// Largest `|mean_i vr_gradient(i) − ∇f(x)|` over coordinates.
pub fn unbiasedness_gap<P: FiniteSum<f64> + ?Sized>(problem: &P, x: &[f64], u: &[f64]) -> Result<f64, VerifyError> {
    let n = problem.num_components();
    let grad_u = problem.full_grad(u)?;
    let mut mean = vec![0.0; problem.dim()];
    for i in 0..n {
        let g = problem.vr_gradient(i, x, u, &grad_u)?;
        linalg::axpy(1.0 / n as f64, &g, &mut mean);
    }
    let grad_x = problem.full_grad(x)?;
    Ok(mean.iter().zip(&grad_x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    AdaVrae,
    AdaVrag,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::AdaVrae => "AdaVRAE",
            ScheduleKind::AdaVrag => "AdaVRAG",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Epoch of the first violation.
    pub first_violation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub kind: ScheduleKind,
    pub n: usize,
    pub epochs: usize,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Relative slack for inequalities that hold with equality in exact
/// arithmetic on some epochs.
pub const AUDIT_SLACK: f64 = 1e-10;

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + AUDIT_SLACK * lhs.abs().max(rhs.abs())
}

struct Tally {
    name: &'static str,
    first: Option<usize>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, first: None }
    }

    fn record(&mut self, s: usize, ok: bool) {
        if !ok && self.first.is_none() {
            self.first = Some(s);
        }
    }

    fn finish(self) -> AuditCheck {
        AuditCheck { name: self.name, passed: self.first.is_none(), first_violation: self.first }
    }
}

pub fn schedule_audit(kind: ScheduleKind, n: usize, epochs: usize) -> Result<AuditReport, ScheduleError> {
    match kind {
        ScheduleKind::AdaVrae => audit_adavrae_with(n, epochs, |s| schedules::adavrae_a(s, n)),
        ScheduleKind::AdaVrag => audit_adavrag_with(
            n,
            epochs,
            |s| schedules::adavrag_a(s, n),
            |s| schedules::adavrag_q(s, n),
        ),
    }
}

/// Audits an extra-gradient coefficient sequence `coeff(s)` with `T_s = n`.
pub fn audit_adavrae_with(
    n: usize,
    epochs: usize,
    coeff: impl Fn(usize) -> Result<f64, ScheduleError>,
) -> Result<AuditReport, ScheduleError> {
    let s0 = s0_of(n)?;
    let c = ADAVRAE_C;
    let nf = n as f64;
    let mut start = Tally::new("a_sq_below_4A0");
    let mut lower = Tally::new("A_end_lower_bound");
    let mut mono = Tally::new("a_monotone_within_phase");

    let mut a_end = ADAVRAE_A_INIT;
    let mut prev_a: Option<f64> = None;
    for s in 1..=epochs {
        let a = coeff(s)?;
        // A_0 = A_end − T a²; the error path covers A_0 ≤ 0 and a² ≥ 4 A_0
        let a0 = match accumulator_epoch_init(a_end, a, n) {
            Ok(v) => v,
            Err(_) => {
                start.record(s, false);
                a_end - nf * a * a
            }
        };
        // n applications of accumulator_step from A_0
        a_end = a0 + nf * (accumulator_step(0.0, a));
        let bound = if s <= s0 {
            nf * (-(0.5f64.powi(s as i32)) * (4.0 * nf).ln()).exp()
        } else {
            nf / (4.0 * c) * ((s - s0) as f64).powi(2)
        };
        lower.record(s, a_end >= bound);
        if let Some(p) = prev_a {
            if s != s0 + 1 {
                mono.record(s, le(p, a));
            }
        }
        prev_a = Some(a);
    }
    Ok(AuditReport {
        kind: ScheduleKind::AdaVrae,
        n,
        epochs,
        checks: vec![start.finish(), lower.finish(), mono.finish()],
    })
}

/// Audits mirror-descent sequences `a(s)`, `q(s)` with `T_s = n`.
pub fn audit_adavrag_with(
    n: usize,
    epochs: usize,
    a: impl Fn(usize) -> Result<f64, ScheduleError>,
    q: impl Fn(usize) -> Result<f64, ScheduleError>,
) -> Result<AuditReport, ScheduleError> {
    let s0 = s0_of(n)?;
    let c = adavrag_c();
    let nf = n as f64;
    let mut range = Tally::new("a_in_unit_interval_q_positive");
    let mut first = Tally::new("first_epoch_ratio_quarter");
    let mut at_s0 = Tally::new("a_s0_at_most_half");
    let mut q_lower = Tally::new("q_dominates_step_weight");
    let mut ratio = Tally::new("ratio_nonincreasing");
    let mut bound = Tally::new("qa_over_T_bound");

    at_s0.record(s0, le(a(s0)?, 0.5));
    {
        let (a1, q1) = (a(1)?, q(1)?);
        let v = (1.0 - a1) * nf / (q1 * a1);
        first.record(1, (v - 0.25).abs() <= AUDIT_SLACK);
    }
    for s in 1..=epochs {
        let (as_, qs) = (a(s)?, q(s)?);
        range.record(s, as_ > 0.0 && as_ < 1.0 && qs > 0.0);
        q_lower.record(s, le((2.0 - as_) * as_ / (1.0 - as_), qs));

        let (an, qn) = (a(s + 1)?, q(s + 1)?);
        ratio.record(s, le((1.0 - an) * nf / (qn * an), nf / (qs * as_)));

        let lhs = qs * as_ / nf;
        let rhs = if s <= s0 {
            4.0 / (4.0 * nf).powf(1.0 - 0.5f64.powi(s as i32))
        } else {
            2.0 * (5.0 + 33f64.sqrt()) * c * c / (3.0 * nf * ((s - s0) as f64 + 2.0 * c).powi(2))
        };
        bound.record(s, le(lhs, rhs));
    }
    Ok(AuditReport {
        kind: ScheduleKind::AdaVrag,
        n,
        epochs,
        checks: vec![
            range.finish(),
            first.finish(),
            at_s0.finish(),
            q_lower.finish(),
            ratio.finish(),
            bound.finish(),
        ],
    })
}

/// One line of the `verify` suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteLine {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

/// Runs every property check on small synthetic problems.
pub fn run_suite(seed: u64) -> Result<Vec<SuiteLine>, VerifyError> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = synth_classification::<f64>(20, 5, seed).map_err(|e| match e {
        crate::data::DataError::Problem(p) => VerifyError::Problem(p),
        other => VerifyError::Problem(ProblemError::InvalidDataset(other.to_string())),
    })?;
    let rand_point = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<f64> {
        (0..5).map(|_| rng.random_range(-scale..scale)).collect()
    };

    let logistic = FiniteSumObjective::new(ds.clone(), LossKind::Logistic, 0.05)?;
    let mut worst_ratio: f64 = 0.0;
    let mut vr_ok = true;
    for _ in 0..200 {
        let x = rand_point(&mut rng, 3.0);
        let u = rand_point(&mut rng, 3.0);
        let (lhs, rhs) = vr_check(&logistic, &x, &u)?;
        vr_ok &= lhs <= rhs * (1.0 + 1e-9);
        if rhs > 0.0 {
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    out.push(SuiteLine {
        check: "variance_bound".into(),
        passed: vr_ok,
        detail: format!("max lhs/rhs = {worst_ratio:.6}"),
    });

    let mut worst_bias: f64 = 0.0;
    for _ in 0..100 {
        let x = rand_point(&mut rng, 3.0);
        let u = rand_point(&mut rng, 3.0);
        worst_bias = worst_bias.max(unbiasedness_gap(&logistic, &x, &u)?);
    }
    out.push(SuiteLine {
        check: "estimator_unbiased".into(),
        passed: worst_bias <= 1e-10,
        detail: format!("max abs deviation = {worst_bias:.3e}"),
    });

    for (loss, tol) in [
        (LossKind::Logistic, 1e-6),
        (LossKind::huber_default(), 1e-6),
        (LossKind::Squared, 1e-9),
    ] {
        let obj = FiniteSumObjective::new(ds.clone(), loss, 0.05)?;
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let x = rand_point(&mut rng, 2.0);
            worst = worst.max(fd_check(&obj, &x, tol)?.max_error);
        }
        out.push(SuiteLine {
            check: format!("fd_gradient_{}", loss.name()),
            passed: worst <= tol,
            detail: format!("max rel error = {worst:.3e} (tol {tol:e})"),
        });
    }

    for kind in [ScheduleKind::AdaVrae, ScheduleKind::AdaVrag] {
        for n in [1usize, 10, 100, 1_000, 1_000_000] {
            let report = schedule_audit(kind, n, 60)?;
            for check in &report.checks {
                out.push(SuiteLine {
                    check: format!("schedule_{}_{}_n{}", kind.to_string().to_lowercase(), check.name, n),
                    passed: check.passed,
                    detail: match check.first_violation {
                        Some(s) => format!("first violation at s = {s}"),
                        None => "s = 1..60".into(),
                    },
                });
            }
        }
    }
    Ok(out)
}
