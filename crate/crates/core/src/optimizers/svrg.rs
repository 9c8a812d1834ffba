//! Proximal SVRG and SVRG++ baselines.

use super::{GradCounter, IndexStream, RunError, RunObserver, StepEvent};
use crate::geometry::ProxTerm;
use crate::linalg;
use crate::problem::{FiniteSum, Point};
use crate::scalar::Scalar;
use rand::Rng;

/// How the next checkpoint is formed from the inner iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotRule {
    /// Plain SVRG in its practical form: the last inner iterate.
    LastIterate,
    /// SVRG++: the average of the inner iterates.
    Average,
}

#[derive(Debug, Clone)]
pub struct SvrgState<T> {
    /// Current inner iterate; carried into the next epoch.
    pub x: Point<T>,
    pub u: Point<T>,
    pub epoch: usize,
}

impl<T: Scalar> SvrgState<T> {
    pub fn init(u0: &[T]) -> Self {
        Self { x: u0.to_vec(), u: u0.to_vec(), epoch: 0 }
    }

    /// One epoch of `len` steps `x ← prox_{step·h}(x − step·g)`.
    #[allow(clippy::too_many_arguments)]
    pub fn run_epoch<P, R, O>(
        &mut self,
        problem: &P,
        prox: &ProxTerm<T>,
        step: T,
        len: usize,
        rule: SnapshotRule,
        counter: &mut GradCounter,
        rng: &mut R,
        observer: &mut O,
    ) -> Result<(), RunError>
    where
        P: FiniteSum<T> + ?Sized,
        R: Rng + ?Sized,
        O: RunObserver<T> + ?Sized,
    {
        let s = self.epoch + 1;
        let grad_f_u = counter.full_grad(problem, &self.u)?;
        let mut sum = vec![T::zero(); self.x.len()];
        let mut indices = IndexStream::new(problem.num_components());
        for t in 1..=len {
            let i = indices.next(rng);
            let g = counter.vr_gradient(problem, i, &self.x, &self.u, &grad_f_u)?;
            let trial = linalg::lincomb(T::one(), &self.x, -step, &g);
            let x = prox.prox(&trial, step)?;
            let moved = linalg::dist_sq(&x, &self.x);
            observer.on_step(&StepEvent {
                epoch: s,
                t,
                a: T::zero(),
                weight: if step > T::zero() { T::one() / step } else { T::infinity() },
                gamma_prev: step,
                gamma: step,
                increment: moved,
                x: &x,
                z: None,
                xbar: &x,
                averaging_residual: None,
            });
            linalg::axpy(T::one(), &x, &mut sum);
            self.x = x;
        }
        self.u = match rule {
            SnapshotRule::LastIterate => self.x.clone(),
            SnapshotRule::Average if len > 0 => sum.iter().map(|&v| v / T::of_usize(len)).collect(),
            SnapshotRule::Average => self.u.clone(),
        };
        self.epoch = s;
        Ok(())
    }
}
