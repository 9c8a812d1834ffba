//! Epoch coefficient schedules for the extra-gradient (AdaVRAE/VRAE) and
//! mirror-descent (AdaVRAG/VRAG) methods.
//!
//! Both families run two phases. For `s ≤ s0 = ⌈log2 log2 4n⌉` the checkpoint
//! coefficient moves doubly-exponentially; afterwards it follows a `1/s` type
//! law. Epoch lengths are `T_s = n` throughout.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("number of components must be at least 1")]
    EmptyProblem,
    #[error("epochs are numbered from 1")]
    ZeroEpoch,
    #[error("epoch start weight A0 = {a0} violates a² < 4·A0 with a = {a}")]
    InvalidEpochStart { a0: f64, a: f64 },
    #[error("coefficient {0} outside (0, 1)")]
    CoefficientOutOfRange(f64),
}

/// Constant `c` of the extra-gradient schedule.
pub const ADAVRAE_C: f64 = 1.5;

/// Initial accumulator `A_{T_0}^{(0)}`.
pub const ADAVRAE_A_INIT: f64 = 1.25;

/// Constant `c = (3 + √33)/4` of the mirror-descent schedule.
pub fn adavrag_c() -> f64 {
    (3.0 + 33f64.sqrt()) / 4.0
}

/// Length of the first phase, `⌈log2 log2 4n⌉`.
///
/// Values within `1e-12` of an integer are snapped to it so that exact powers
/// (`n = 1, 4, 64, ...`) are not pushed up by rounding.
pub fn s0_of(n: usize) -> Result<usize, ScheduleError> {
    if n == 0 {
        return Err(ScheduleError::EmptyProblem);
    }
    let v = (4.0 * n as f64).log2().log2();
    let r = v.round();
    let s0 = if (v - r).abs() <= 1e-12 { r } else { v.ceil() };
    Ok(s0.max(0.0) as usize)
}

/// `(4n)^(-0.5^s)`, evaluated as `exp(-0.5^s · ln 4n)`.
fn decay<T: Scalar>(s: usize, n: usize) -> T {
    let half_pow = T::lit(0.5).powi(s.min(i32::MAX as usize) as i32);
    (-half_pow * T::of_usize(4 * n).ln()).exp()
}

fn check_args(s: usize, n: usize) -> Result<(), ScheduleError> {
    if n == 0 {
        return Err(ScheduleError::EmptyProblem);
    }
    if s == 0 {
        return Err(ScheduleError::ZeroEpoch);
    }
    Ok(())
}

/// Checkpoint coefficient `a^(s)` of the extra-gradient methods.
pub fn adavrae_a<T: Scalar>(s: usize, n: usize) -> Result<T, ScheduleError> {
    check_args(s, n)?;
    let s0 = s0_of(n)?;
    if s <= s0 {
        Ok(decay(s, n))
    } else {
        let c = T::lit(ADAVRAE_C);
        Ok((T::of_usize(s - s0 - 1) + c) / (T::lit(2.0) * c))
    }
}

/// `A_t = A_{t-1} + a + a²`.
pub fn accumulator_step<T: Scalar>(a_prev: T, a: T) -> T {
    a_prev + a + a * a
}

/// `A_0^(s) = A_{T_{s-1}}^{(s-1)} − T_s·a²`, rejected unless `a² < 4·A_0^(s)`.
pub fn accumulator_epoch_init<T: Scalar>(a_end_prev: T, a: T, epoch_len: usize) -> Result<T, ScheduleError> {
    let a0 = a_end_prev - T::of_usize(epoch_len) * a * a;
    if !(a0 > T::zero()) || !(a * a < T::lit(4.0) * a0) {
        return Err(ScheduleError::InvalidEpochStart { a0: a0.as_f64(), a: a.as_f64() });
    }
    Ok(a0)
}

/// Checkpoint coefficient `a^(s) ∈ (0, 1)` of the mirror-descent methods.
pub fn adavrag_a<T: Scalar>(s: usize, n: usize) -> Result<T, ScheduleError> {
    check_args(s, n)?;
    let s0 = s0_of(n)?;
    if s <= s0 {
        Ok(T::one() - decay(s, n))
    } else {
        let c = T::lit(adavrag_c());
        Ok(c / (T::of_usize(s - s0) + T::lit(2.0) * c))
    }
}

/// Per-epoch step multiplier `q^(s)` of AdaVRAG.
pub fn adavrag_q<T: Scalar>(s: usize, n: usize) -> Result<T, ScheduleError> {
    let a: T = adavrag_a(s, n)?;
    let s0 = s0_of(n)?;
    if s <= s0 {
        Ok(T::one() / ((T::one() - a) * a))
    } else {
        Ok(T::lit(8.0) * (T::lit(2.0) - a) * a / (T::lit(3.0) * (T::one() - a)))
    }
}

/// Quadratic weight `β(2−a)a/(1−a)` of the VRAG step (the algorithm's
/// coefficient on `‖x − x_{t−1}‖²` is half of this).
pub fn vrag_step_weight<T: Scalar>(a: T, beta: T) -> Result<T, ScheduleError> {
    if !(a > T::zero() && a < T::one()) {
        return Err(ScheduleError::CoefficientOutOfRange(a.as_f64()));
    }
    Ok(beta * (T::lit(2.0) - a) * a / (T::one() - a))
}

/// Coefficient sequence and running accumulator for one extra-gradient run.
#[derive(Debug, Clone)]
pub struct AdaVraeSchedule<T> {
    n: usize,
    s0: usize,
    a_end: T,
}

impl<T: Scalar> AdaVraeSchedule<T> {
    pub fn new(n: usize) -> Result<Self, ScheduleError> {
        Ok(Self { n, s0: s0_of(n)?, a_end: T::lit(ADAVRAE_A_INIT) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn c(&self) -> T {
        T::lit(ADAVRAE_C)
    }

    pub fn epoch_len(&self, _s: usize) -> usize {
        self.n
    }

    pub fn a(&self, s: usize) -> Result<T, ScheduleError> {
        adavrae_a(s, self.n)
    }

    /// `A` carried over from the previous epoch.
    pub fn carried(&self) -> T {
        self.a_end
    }

    /// Returns `(a^(s), A_0^(s))` for the epoch about to start.
    pub fn begin_epoch(&self, s: usize) -> Result<(T, T), ScheduleError> {
        let a = self.a(s)?;
        let a0 = accumulator_epoch_init(self.a_end, a, self.epoch_len(s))?;
        Ok((a, a0))
    }

    pub fn end_epoch(&mut self, a_final: T) {
        self.a_end = a_final;
    }
}

/// Coefficient sequences of one mirror-descent run.
#[derive(Debug, Clone, Copy)]
pub struct AdaVragSchedule {
    n: usize,
    s0: usize,
}

impl AdaVragSchedule {
    pub fn new(n: usize) -> Result<Self, ScheduleError> {
        Ok(Self { n, s0: s0_of(n)? })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn c(&self) -> f64 {
        adavrag_c()
    }

    pub fn epoch_len(&self, _s: usize) -> usize {
        self.n
    }

    pub fn a<T: Scalar>(&self, s: usize) -> Result<T, ScheduleError> {
        adavrag_a(s, self.n)
    }

    pub fn q<T: Scalar>(&self, s: usize) -> Result<T, ScheduleError> {
        adavrag_q(s, self.n)
    }
}
