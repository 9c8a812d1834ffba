//! Finite-sum composite objectives `F = f + h` with `f = (1/n) Σ f_i`.
//!
//! Each component is a margin or residual loss on one labelled sparse example
//! plus an ℓ2 term `(λ/2)‖x‖²`, so the full average carries the regularizer
//! exactly once. Optimizers only see the [`FiniteSum`] trait, which lets tests
//! plug in hand-built problems.

use crate::linalg;
use crate::scalar::Scalar;
use thiserror::Error;

/// Dense iterate (`x`, `u`, `z`, `x̄`).
pub type Point<T> = Vec<T>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
}

/// Sparse feature vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow<T> {
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseRow<T> {
    pub fn new(indices: Vec<usize>, values: Vec<T>) -> Result<Self, ProblemError> {
        if indices.len() != values.len() {
            return Err(ProblemError::InvalidDataset(format!(
                "row has {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProblemError::InvalidDataset(
                "row indices must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self { indices, values })
    }

    pub fn from_dense(dense: &[T]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(j, &v)| (j, v))
            .unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, x: &[T]) -> T {
        self.iter().fold(T::zero(), |acc, (j, v)| acc + v * x[j])
    }

    pub fn norm_sq(&self) -> T {
        linalg::norm_sq(&self.values)
    }

    /// `out += alpha * row`
    pub fn axpy_into(&self, alpha: T, out: &mut [T]) {
        for (j, v) in self.iter() {
            out[j] = out[j] + alpha * v;
        }
    }

    fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }
}

/// Sparse examples with binary labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    rows: Vec<SparseRow<T>>,
    labels: Vec<T>,
    dim: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(rows: Vec<SparseRow<T>>, labels: Vec<T>, dim: usize) -> Result<Self, ProblemError> {
        if rows.is_empty() {
            return Err(ProblemError::InvalidDataset("dataset has no examples".into()));
        }
        if dim == 0 {
            return Err(ProblemError::InvalidDataset("feature dimension must be ≥ 1".into()));
        }
        if rows.len() != labels.len() {
            return Err(ProblemError::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if let Some(j) = row.max_index() {
                if j >= dim {
                    return Err(ProblemError::InvalidDataset(format!(
                        "row {i} has feature index {j} ≥ d = {dim}"
                    )));
                }
            }
        }
        if let Some(i) = labels
            .iter()
            .position(|&y| y != T::one() && y != -T::one())
        {
            return Err(ProblemError::InvalidDataset(format!(
                "label of row {i} is not in {{-1, +1}}"
            )));
        }
        Ok(Self { rows, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseRow<T>] {
        &self.rows
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &SparseRow<T> {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> T {
        self.labels[i]
    }

    /// Same examples viewed in a larger feature space.
    pub fn with_dim(mut self, dim: usize) -> Result<Self, ProblemError> {
        if dim < self.dim {
            return Err(ProblemError::InvalidDataset(format!(
                "cannot shrink dimension from {} to {dim}",
                self.dim
            )));
        }
        self.dim = dim;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind<T> {
    Logistic,
    Squared,
    Huber { delta: T },
}

impl<T: Scalar> LossKind<T> {
    pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

    pub fn huber_default() -> Self {
        LossKind::Huber { delta: T::lit(Self::DEFAULT_HUBER_DELTA) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Squared => "squared",
            LossKind::Huber { .. } => "huber",
        }
    }

    /// Loss value and derivative with respect to the linear score `⟨a, x⟩`.
    fn value_and_slope(&self, score: T, y: T) -> (T, T) {
        match *self {
            LossKind::Logistic => {
                let m = y * score;
                // log(1 + e^{-m}) without overflow for either sign of m
                let value = (-m.abs()).exp().ln_1p() + (-m).max(T::zero());
                (value, -y * sigmoid(-m))
            }
            LossKind::Squared => {
                let r = score - y;
                (T::lit(0.5) * r * r, r)
            }
            LossKind::Huber { delta } => {
                let r = score - y;
                if r.abs() <= delta {
                    (T::lit(0.5) * r * r, r)
                } else {
                    (delta * (r.abs() - T::lit(0.5) * delta), delta * r.signum())
                }
            }
        }
    }

    /// Upper bound on the second derivative of the loss in its score.
    fn curvature_bound(&self) -> T {
        match self {
            LossKind::Logistic => T::lit(0.25),
            LossKind::Squared | LossKind::Huber { .. } => T::one(),
        }
    }
}

fn sigmoid<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// A finite sum `f = (1/n) Σ_i f_i` of smooth convex components.
///
/// Implementors supply the unchecked per-component primitives; the provided
/// methods validate arguments and build averages and the variance-reduced
/// estimator on top of them.
pub trait FiniteSum<T: Scalar>: Sync {
    /// Number of components `n`.
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    /// `f_i(x)` without argument checks.
    fn value_unchecked(&self, i: usize, x: &[T]) -> T;

    /// `out += weight * ∇f_i(x)` without argument checks.
    fn accumulate_grad(&self, i: usize, x: &[T], weight: T, out: &mut [T]);

    /// A common smoothness constant `β` valid for every `f_i`.
    fn smoothness_bound(&self) -> T;

    fn check_point(&self, x: &[T]) -> Result<(), ProblemError> {
        if x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<(), ProblemError> {
        let n = self.num_components();
        if i >= n {
            return Err(ProblemError::IndexOutOfRange { index: i, n });
        }
        Ok(())
    }

    fn component_value(&self, i: usize, x: &[T]) -> Result<T, ProblemError> {
        self.check_index(i)?;
        self.check_point(x)?;
        Ok(self.value_unchecked(i, x))
    }

    fn component_grad(&self, i: usize, x: &[T]) -> Result<Point<T>, ProblemError> {
        self.check_index(i)?;
        self.check_point(x)?;
        let mut g = vec![T::zero(); self.dim()];
        self.accumulate_grad(i, x, T::one(), &mut g);
        Ok(g)
    }

    fn full_value(&self, x: &[T]) -> Result<T, ProblemError> {
        self.check_point(x)?;
        let n = self.num_components();
        let total: T = (0..n).map(|i| self.value_unchecked(i, x)).sum();
        Ok(total / T::of_usize(n))
    }

    fn full_grad(&self, x: &[T]) -> Result<Point<T>, ProblemError> {
        self.check_point(x)?;
        let n = self.num_components();
        let w = T::one() / T::of_usize(n);
        let mut g = vec![T::zero(); self.dim()];
        for i in 0..n {
            self.accumulate_grad(i, x, w, &mut g);
        }
        Ok(g)
    }

    /// Variance-reduced estimate `∇f_i(x) − ∇f_i(u) + ∇f(u)`.
    fn vr_gradient(
        &self,
        i: usize,
        x: &[T],
        u: &[T],
        grad_f_u: &[T],
    ) -> Result<Point<T>, ProblemError> {
        self.check_index(i)?;
        self.check_point(x)?;
        self.check_point(u)?;
        self.check_point(grad_f_u)?;
        // difference first, so x = u returns grad_f_u bit for bit
        let mut g = vec![T::zero(); grad_f_u.len()];
        let mut at_u = vec![T::zero(); grad_f_u.len()];
        self.accumulate_grad(i, x, T::one(), &mut g);
        self.accumulate_grad(i, u, T::one(), &mut at_u);
        for ((gj, &uj), &fj) in g.iter_mut().zip(&at_u).zip(grad_f_u) {
            *gj = (*gj - uj) + fj;
        }
        Ok(g)
    }
}

/// Regularized empirical risk over a [`LabeledDataset`].
#[derive(Debug, Clone)]
pub struct FiniteSumObjective<T> {
    dataset: LabeledDataset<T>,
    loss: LossKind<T>,
    l2_lambda: T,
}

impl<T: Scalar> FiniteSumObjective<T> {
    pub fn new(dataset: LabeledDataset<T>, loss: LossKind<T>, l2_lambda: T) -> Result<Self, ProblemError> {
        if !(l2_lambda >= T::zero()) || !l2_lambda.is_finite() {
            return Err(ProblemError::InvalidObjective(format!(
                "l2 weight must be finite and nonnegative, got {l2_lambda}"
            )));
        }
        if let LossKind::Huber { delta } = loss {
            if !(delta > T::zero()) || !delta.is_finite() {
                return Err(ProblemError::InvalidObjective(format!(
                    "huber delta must be positive, got {delta}"
                )));
            }
        }
        Ok(Self { dataset, loss, l2_lambda })
    }

    pub fn dataset(&self) -> &LabeledDataset<T> {
        &self.dataset
    }

    pub fn loss(&self) -> LossKind<T> {
        self.loss
    }

    pub fn l2_lambda(&self) -> T {
        self.l2_lambda
    }

    fn regularizer(&self, x: &[T]) -> T {
        T::lit(0.5) * self.l2_lambda * linalg::norm_sq(x)
    }
}

impl<T: Scalar> FiniteSum<T> for FiniteSumObjective<T> {
    fn num_components(&self) -> usize {
        self.dataset.len()
    }

    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn value_unchecked(&self, i: usize, x: &[T]) -> T {
        let score = self.dataset.row(i).dot(x);
        let (value, _) = self.loss.value_and_slope(score, self.dataset.label(i));
        value + self.regularizer(x)
    }

    fn accumulate_grad(&self, i: usize, x: &[T], weight: T, out: &mut [T]) {
        let row = self.dataset.row(i);
        let (_, slope) = self.loss.value_and_slope(row.dot(x), self.dataset.label(i));
        row.axpy_into(weight * slope, out);
        if !self.l2_lambda.is_zero() {
            linalg::axpy(weight * self.l2_lambda, x, out);
        }
    }

    fn smoothness_bound(&self) -> T {
        let k = self.loss.curvature_bound();
        let max_row = self
            .dataset
            .rows()
            .iter()
            .map(|r| r.norm_sq())
            .fold(T::zero(), T::max);
        k * max_row + self.l2_lambda
    }

    // The averages below factor the ℓ2 term out of the sum; they equal the
    // plain component averages up to rounding.
    fn full_value(&self, x: &[T]) -> Result<T, ProblemError> {
        self.check_point(x)?;
        let n = self.num_components();
        let total: T = (0..n)
            .map(|i| {
                let score = self.dataset.row(i).dot(x);
                self.loss.value_and_slope(score, self.dataset.label(i)).0
            })
            .sum();
        Ok(total / T::of_usize(n) + self.regularizer(x))
    }

    fn full_grad(&self, x: &[T]) -> Result<Point<T>, ProblemError> {
        self.check_point(x)?;
        let n = self.num_components();
        let w = T::one() / T::of_usize(n);
        let mut g = vec![T::zero(); self.dim()];
        for (row, &y) in self.dataset.rows().iter().zip(self.dataset.labels()) {
            let (_, slope) = self.loss.value_and_slope(row.dot(x), y);
            row.axpy_into(w * slope, &mut g);
        }
        linalg::axpy(self.l2_lambda, x, &mut g);
        Ok(g)
    }
}
