//! Adaptive accelerated variance-reduced methods for smooth convex finite
//! sums over a bounded domain.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64` (and `f32` with a `32` suffix) for callers
//! that do not care.

// `!(x > 0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod problem;
pub mod scalar;
pub mod schedules;
pub mod verify;

pub use geometry::{FeasibleRegion, GeometryError, ProxTerm};
pub use optimizers::{run, run_observed, AlgorithmKind, RunError, RunObserver, RunParams, StepEvent, Trace};
pub use problem::{FiniteSum, FiniteSumObjective, LabeledDataset, LossKind, ProblemError, SparseRow};
pub use scalar::Scalar;

pub type Dataset = LabeledDataset<f64>;
pub type Dataset32 = LabeledDataset<f32>;
pub type Objective = FiniteSumObjective<f64>;
pub type Objective32 = FiniteSumObjective<f32>;
pub type Region = FeasibleRegion<f64>;
pub type Region32 = FeasibleRegion<f32>;
pub type Prox = ProxTerm<f64>;
pub type Prox32 = ProxTerm<f32>;
pub type Loss = LossKind<f64>;
pub type Loss32 = LossKind<f32>;
pub type Params = RunParams<f64>;
pub type Params32 = RunParams<f32>;
pub type RunTrace = Trace<f64>;
pub type RunTrace32 = Trace<f32>;
