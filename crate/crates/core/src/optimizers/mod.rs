//! Epoch-based variance-reduced optimizers behind a single [`run`] entry point.
//!
//! Every method alternates a checkpoint full gradient with `T_s` stochastic
//! inner steps that use the estimator `∇f_i(x) − ∇f_i(u) + ∇f(u)`. The
//! [`GradCounter`] charges `n` per full gradient and `2` per estimator, and is
//! the x-axis of every [`Trace`].

mod extragradient;
mod mirror;
mod svrg;

pub use extragradient::{AdaVraeState, StepRule};
pub use mirror::{AdaVragState, MirrorRule};
pub use svrg::{SnapshotRule, SvrgState};

use crate::geometry::{FeasibleRegion, GeometryError, ProxTerm};
use crate::problem::{FiniteSum, Point, ProblemError};
use crate::scalar::Scalar;
use crate::schedules::{AdaVraeSchedule, AdaVragSchedule, ScheduleError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Generator driving all sampling inside a run.
pub type RunRng = ChaCha8Rng;

/// Identifier of the sampling scheme recorded in trace metadata. Bump the
/// suffix whenever the generator or the way it is consumed changes.
pub const RNG_ID: &str = "chacha8(rand_chacha 0.9)+fisher-yates/v1";

pub fn rng_from_seed(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random permutation of `0..n` by Fisher–Yates.
pub fn epoch_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Yields sample indices for an epoch of arbitrary length, drawing a fresh
/// permutation each time `n` indices have been consumed.
pub(crate) struct IndexStream {
    n: usize,
    buf: Vec<usize>,
    pos: usize,
}

impl IndexStream {
    pub(crate) fn new(n: usize) -> Self {
        Self { n, buf: Vec::new(), pos: 0 }
    }

    pub(crate) fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        if self.pos == self.buf.len() {
            self.buf = epoch_permutation(self.n, rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.buf[self.pos - 1]
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{0} needs a bounded domain")]
    UnboundedDomain(AlgorithmKind),
    #[error("{algorithm} needs parameter `{name}`")]
    MissingParameter { algorithm: AlgorithmKind, name: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("feasible region and indicator term describe different sets")]
    IncompatibleDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmKind {
    AdaVrae,
    AdaVragI,
    AdaVragII,
    Vrae,
    Vrag,
    Svrg,
    SvrgPp,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 7] = [
        AlgorithmKind::AdaVrae,
        AlgorithmKind::AdaVragI,
        AlgorithmKind::AdaVragII,
        AlgorithmKind::Vrae,
        AlgorithmKind::Vrag,
        AlgorithmKind::Svrg,
        AlgorithmKind::SvrgPp,
    ];

    /// Algorithm family name as written to CSV.
    pub fn family(self) -> &'static str {
        match self {
            AlgorithmKind::AdaVrae => "AdaVRAE",
            AlgorithmKind::AdaVragI | AlgorithmKind::AdaVragII => "AdaVRAG",
            AlgorithmKind::Vrae => "VRAE",
            AlgorithmKind::Vrag => "VRAG",
            AlgorithmKind::Svrg => "SVRG",
            AlgorithmKind::SvrgPp => "SVRG++",
        }
    }

    /// Step-size option label (`I`/`II`), empty for single-option methods.
    pub fn option(self) -> &'static str {
        match self {
            AlgorithmKind::AdaVragI => "I",
            AlgorithmKind::AdaVragII => "II",
            _ => "",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, AlgorithmKind::AdaVrae | AlgorithmKind::AdaVragI | AlgorithmKind::AdaVragII)
    }

    /// Command-line spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            AlgorithmKind::AdaVrae => "adavrae",
            AlgorithmKind::AdaVragI => "adavrag-i",
            AlgorithmKind::AdaVragII => "adavrag-ii",
            AlgorithmKind::Vrae => "vrae",
            AlgorithmKind::Vrag => "vrag",
            AlgorithmKind::Svrg => "svrg",
            AlgorithmKind::SvrgPp => "svrg++",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.option() {
            "" => f.write_str(self.family()),
            opt => write!(f, "{}-{}", self.family(), opt),
        }
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let kind = match key.as_str() {
            "adavrae" => AlgorithmKind::AdaVrae,
            "adavrag-i" | "adavrag1" | "adavrag-1" => AlgorithmKind::AdaVragI,
            "adavrag-ii" | "adavrag2" | "adavrag-2" | "adavrag" => AlgorithmKind::AdaVragII,
            "vrae" => AlgorithmKind::Vrae,
            "vrag" => AlgorithmKind::Vrag,
            "svrg" => AlgorithmKind::Svrg,
            "svrg++" | "svrgpp" | "svrg-pp" => AlgorithmKind::SvrgPp,
            _ => return Err(format!("unknown algorithm `{s}`")),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams<T> {
    /// Number of epochs `S`.
    pub epochs: usize,
    /// Initial adaptive step `γ`.
    pub gamma0: T,
    /// Adaptive scale `η`; defaults to `D/2`.
    pub eta: Option<T>,
    /// Smoothness for the non-adaptive methods; defaults to the problem bound.
    pub beta_override: Option<T>,
    /// Step size for the SVRG baselines.
    pub step_size: Option<T>,
    pub seed: u64,
    /// First epoch length of SVRG++; defaults to `⌈n/4⌉`.
    pub svrgpp_t1: Option<usize>,
}

impl<T: Scalar> Default for RunParams<T> {
    fn default() -> Self {
        Self {
            epochs: 0,
            gamma0: T::lit(0.01),
            eta: None,
            beta_override: None,
            step_size: None,
            seed: 0,
            svrgpp_t1: None,
        }
    }
}

/// Count of individual component-gradient evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradCounter {
    count: u64,
}

impl GradCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `∇f(x)`, charged `n`.
    pub fn full_grad<T: Scalar, P: FiniteSum<T> + ?Sized>(
        &mut self,
        problem: &P,
        x: &[T],
    ) -> Result<Point<T>, ProblemError> {
        let g = problem.full_grad(x)?;
        self.count += problem.num_components() as u64;
        Ok(g)
    }

    /// Variance-reduced estimator, charged `2`.
    pub fn vr_gradient<T: Scalar, P: FiniteSum<T> + ?Sized>(
        &mut self,
        problem: &P,
        i: usize,
        x: &[T],
        u: &[T],
        grad_f_u: &[T],
    ) -> Result<Point<T>, ProblemError> {
        let g = problem.vr_gradient(i, x, u, grad_f_u)?;
        self.count += 2;
        Ok(g)
    }
}

/// What happened in one inner iteration, reported to a [`RunObserver`].
#[derive(Debug)]
pub struct StepEvent<'a, T> {
    pub epoch: usize,
    pub t: usize,
    pub a: T,
    /// Weight of the proximity term in the primary (x) sub-step.
    pub weight: T,
    pub gamma_prev: T,
    pub gamma: T,
    /// Quantity driving the step update: `a²‖g_t − g_{t−1}‖²` for the
    /// extra-gradient methods, `‖x_t − x_{t−1}‖²` for the mirror methods.
    pub increment: T,
    pub x: &'a [T],
    pub z: Option<&'a [T]>,
    pub xbar: &'a [T],
    /// Largest entrywise `|A_t x̄_t − (A_{t−1}x̄_{t−1} + a x_t + a² u)|`,
    /// relative to `max(1, |rhs|)`. Extra-gradient methods only.
    pub averaging_residual: Option<T>,
}

/// Hook for instrumenting runs. Both methods default to no-ops.
pub trait RunObserver<T> {
    fn on_step(&mut self, _event: &StepEvent<'_, T>) {}
    fn on_epoch_end(&mut self, _epoch: usize, _checkpoint: &[T], _grads: u64) {}
}

impl<T> RunObserver<T> for () {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<T> {
    pub epoch: usize,
    pub grads: u64,
    /// `F(u^(s))`.
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub algorithm: AlgorithmKind,
    pub seed: u64,
    pub rng: &'static str,
    pub n: usize,
    pub epochs: usize,
    pub gamma0: f64,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub step_size: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub meta: TraceMeta,
    pub entries: Vec<TraceEntry<T>>,
    /// Final checkpoint `u^(S)`.
    pub solution: Point<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn final_objective(&self) -> T {
        self.entries.last().map(|e| e.objective).unwrap_or_else(T::nan)
    }

    pub fn final_grads(&self) -> u64 {
        self.entries.last().map(|e| e.grads).unwrap_or(0)
    }
}

/// Merges the region and the composite term into the single prox used by
/// every sub-step.
pub fn effective_domain<T: Scalar>(
    region: &FeasibleRegion<T>,
    h: &ProxTerm<T>,
) -> Result<ProxTerm<T>, RunError> {
    match (region, h) {
        (FeasibleRegion::Unconstrained, term) => Ok(term.clone()),
        (ball @ FeasibleRegion::Ball { .. }, ProxTerm::Zero) => Ok(ProxTerm::indicator(ball.clone())?),
        (ball, ProxTerm::Indicator { region: inner }) if ball == inner => Ok(h.clone()),
        _ => Err(RunError::IncompatibleDomain),
    }
}

/// Runs `params.epochs` epochs of `kind` from `u0`, recording `F(u^(s))`
/// after every epoch.
pub fn run<T: Scalar, P: FiniteSum<T> + ?Sized>(
    problem: &P,
    region: &FeasibleRegion<T>,
    h: &ProxTerm<T>,
    kind: AlgorithmKind,
    u0: &[T],
    params: &RunParams<T>,
) -> Result<Trace<T>, RunError> {
    run_observed(problem, region, h, kind, u0, params, &mut ())
}

pub fn run_observed<T: Scalar, P: FiniteSum<T> + ?Sized, O: RunObserver<T> + ?Sized>(
    problem: &P,
    region: &FeasibleRegion<T>,
    h: &ProxTerm<T>,
    kind: AlgorithmKind,
    u0: &[T],
    params: &RunParams<T>,
    observer: &mut O,
) -> Result<Trace<T>, RunError> {
    problem.check_point(u0)?;
    let domain = effective_domain(region, h)?;
    let set = domain.region();
    if let FeasibleRegion::Ball { center, .. } = &set {
        problem.check_point(center)?;
    }
    let diameter = set.diameter();
    if kind.is_adaptive() && diameter.is_none() {
        return Err(RunError::UnboundedDomain(kind));
    }
    let u0 = set.project(u0);
    let n = problem.num_components();

    let mut meta = TraceMeta {
        algorithm: kind,
        seed: params.seed,
        rng: RNG_ID,
        n,
        epochs: params.epochs,
        gamma0: params.gamma0.as_f64(),
        eta: None,
        beta: None,
        step_size: None,
        warnings: Vec::new(),
    };

    let mut eta = T::zero();
    if kind.is_adaptive() {
        if !(params.gamma0 > T::zero()) {
            return Err(RunError::InvalidParameter(format!("gamma0 must be positive, got {}", params.gamma0)));
        }
        let d = diameter.unwrap_or_else(T::infinity);
        eta = params.eta.unwrap_or(d / T::lit(2.0));
        if !(eta > T::zero()) || !eta.is_finite() {
            return Err(RunError::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        meta.eta = Some(eta.as_f64());
        if kind == AlgorithmKind::AdaVragI && !(T::lit(2.0) * eta * eta > d * d) {
            let msg = format!(
                "option I convergence guarantee assumes 2·eta² > D²; got eta = {eta}, D = {d}"
            );
            log::warn!("{msg}");
            meta.warnings.push(msg);
        }
    }

    let mut beta = T::zero();
    if matches!(kind, AlgorithmKind::Vrae | AlgorithmKind::Vrag) {
        beta = params.beta_override.unwrap_or_else(|| problem.smoothness_bound());
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(RunError::InvalidParameter(format!("smoothness must be positive, got {beta}")));
        }
        meta.beta = Some(beta.as_f64());
    }

    let mut step = T::zero();
    if matches!(kind, AlgorithmKind::Svrg | AlgorithmKind::SvrgPp) {
        step = params
            .step_size
            .ok_or(RunError::MissingParameter { algorithm: kind, name: "step_size" })?;
        if !(step >= T::zero()) || !step.is_finite() {
            return Err(RunError::InvalidParameter(format!("step size must be nonnegative, got {step}")));
        }
        meta.step_size = Some(step.as_f64());
    }

    let objective = |x: &[T]| -> Result<T, RunError> {
        let tol = T::lit(1e-9) * (T::one() + diameter.unwrap_or_else(T::zero));
        Ok(problem.full_value(x)? + domain.value(x, tol))
    };

    let mut counter = GradCounter::new();
    let mut rng = rng_from_seed(params.seed);
    let mut entries = vec![TraceEntry { epoch: 0, grads: 0, objective: objective(&u0)? }];
    let epochs = params.epochs;

    let solution = if epochs == 0 {
        u0
    } else {
        match kind {
            AlgorithmKind::AdaVrae | AlgorithmKind::Vrae => {
                let rule = if kind == AlgorithmKind::AdaVrae {
                    StepRule::Adaptive { eta }
                } else {
                    StepRule::Fixed { gamma: T::lit(8.0) * beta }
                };
                let gamma0 = match rule {
                    StepRule::Adaptive { .. } => params.gamma0,
                    StepRule::Fixed { gamma } => gamma,
                };
                let mut schedule = AdaVraeSchedule::new(n)?;
                let mut state = AdaVraeState::init(problem, &u0, gamma0, &mut counter)?;
                for s in 1..=epochs {
                    state.run_epoch(
                        problem,
                        &mut schedule,
                        &domain,
                        rule,
                        s == epochs,
                        &mut counter,
                        &mut rng,
                        observer,
                    )?;
                    entries.push(TraceEntry { epoch: s, grads: counter.count(), objective: objective(&state.u)? });
                    observer.on_epoch_end(s, &state.u, counter.count());
                }
                state.u
            }
            AlgorithmKind::AdaVragI | AlgorithmKind::AdaVragII | AlgorithmKind::Vrag => {
                let rule = match kind {
                    AlgorithmKind::AdaVragI => MirrorRule::OptionI { eta },
                    AlgorithmKind::AdaVragII => MirrorRule::OptionII { eta },
                    _ => MirrorRule::Fixed { beta },
                };
                let schedule = AdaVragSchedule::new(n)?;
                let mut state = AdaVragState::init(&u0, params.gamma0);
                for s in 1..=epochs {
                    state.run_epoch(problem, &schedule, &domain, rule, &mut counter, &mut rng, observer)?;
                    entries.push(TraceEntry { epoch: s, grads: counter.count(), objective: objective(&state.u)? });
                    observer.on_epoch_end(s, &state.u, counter.count());
                }
                state.u
            }
            AlgorithmKind::Svrg | AlgorithmKind::SvrgPp => {
                let (rule, t1) = if kind == AlgorithmKind::Svrg {
                    (SnapshotRule::LastIterate, n)
                } else {
                    (SnapshotRule::Average, params.svrgpp_t1.unwrap_or(n.div_ceil(4)).max(1))
                };
                let mut state = SvrgState::init(&u0);
                for s in 1..=epochs {
                    let len = match rule {
                        SnapshotRule::LastIterate => t1,
                        SnapshotRule::Average => t1.saturating_mul(1usize.checked_shl(s as u32 - 1).unwrap_or(usize::MAX)),
                    };
                    state.run_epoch(problem, &domain, step, len, rule, &mut counter, &mut rng, observer)?;
                    entries.push(TraceEntry { epoch: s, grads: counter.count(), objective: objective(&state.u)? });
                    observer.on_epoch_end(s, &state.u, counter.count());
                }
                state.u
            }
        }
    };

    Ok(Trace { meta, entries, solution })
}
