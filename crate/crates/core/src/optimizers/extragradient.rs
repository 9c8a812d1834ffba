//! Accelerated past-extra-gradient method (AdaVRAE) and its fixed-step
//! variant (VRAE).

use super::{epoch_permutation, GradCounter, RunError, RunObserver, StepEvent};
use crate::geometry::ProxTerm;
use crate::linalg;
use crate::problem::{FiniteSum, Point};
use crate::scalar::Scalar;
use crate::schedules::{accumulator_step, AdaVraeSchedule};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule<T> {
    /// `γ_t = (1/η)·sqrt(η²γ_{t−1}² + a²‖g_t − g_{t−1}‖²)`.
    Adaptive { eta: T },
    /// `γ_t ≡ gamma` (VRAE uses `8β`).
    Fixed { gamma: T },
}

/// Iterates carried between epochs.
#[derive(Debug, Clone)]
pub struct AdaVraeState<T> {
    pub xbar: Point<T>,
    pub z: Point<T>,
    /// Checkpoint `u^(s−1)`.
    pub u: Point<T>,
    /// Last gradient `g_{t−1}`.
    pub g_prev: Point<T>,
    /// `∇f(u^(s−1))`.
    pub grad_f_u: Point<T>,
    pub gamma: T,
    /// Number of completed epochs.
    pub epoch: usize,
}

impl<T: Scalar> AdaVraeState<T> {
    /// `x̄_0 = z_0 = u^(0)`, `g_0 = ∇f(u^(0))`, `γ_0 = gamma0`.
    pub fn init<P: FiniteSum<T> + ?Sized>(
        problem: &P,
        u0: &[T],
        gamma0: T,
        counter: &mut GradCounter,
    ) -> Result<Self, RunError> {
        let grad = counter.full_grad(problem, u0)?;
        Ok(Self {
            xbar: u0.to_vec(),
            z: u0.to_vec(),
            u: u0.to_vec(),
            g_prev: grad.clone(),
            grad_f_u: grad,
            gamma: gamma0,
            epoch: 0,
        })
    }

    /// Runs epoch `self.epoch + 1`.
    ///
    /// The closing full gradient at `x̄_{T_s}` doubles as `g_0` and `∇f(u^(s))`
    /// for the next epoch. When `last` is set it is skipped together with the
    /// final step-size and `z` updates, which cannot affect `u^(S)`.
    #[allow(clippy::too_many_arguments)]
    pub fn run_epoch<P, R, O>(
        &mut self,
        problem: &P,
        schedule: &mut AdaVraeSchedule<T>,
        prox: &ProxTerm<T>,
        rule: StepRule<T>,
        last: bool,
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
        let len = schedule.epoch_len(s);
        let (a, mut acc) = schedule.begin_epoch(s)?;
        let a_sq = a * a;
        let perm = epoch_permutation(problem.num_components(), rng);

        for t in 1..=len {
            let x = prox.combined_prox(&self.g_prev, &[(self.gamma, &self.z)], a)?;

            let acc_next = accumulator_step(acc, a);
            let mut xbar_next = Vec::with_capacity(x.len());
            let mut residual = T::zero();
            for ((&xb, &xj), &uj) in self.xbar.iter().zip(&x).zip(&self.u) {
                let rhs = acc * xb + a * xj + a_sq * uj;
                let v = rhs / acc_next;
                residual = residual.max((acc_next * v - rhs).abs() / T::one().max(rhs.abs()));
                xbar_next.push(v);
            }
            self.xbar = xbar_next;
            acc = acc_next;

            let g = if t != len {
                let i = perm[t - 1];
                counter.vr_gradient(problem, i, &self.xbar, &self.u, &self.grad_f_u)?
            } else if !last {
                counter.full_grad(problem, &self.xbar)?
            } else {
                observer.on_step(&StepEvent {
                    epoch: s,
                    t,
                    a,
                    weight: self.gamma,
                    gamma_prev: self.gamma,
                    gamma: self.gamma,
                    increment: T::zero(),
                    x: &x,
                    z: None,
                    xbar: &self.xbar,
                    averaging_residual: Some(residual),
                });
                break;
            };

            let increment = a_sq * linalg::dist_sq(&g, &self.g_prev);
            let gamma_prev = self.gamma;
            let gamma = match rule {
                // sqrt(γ² + δ/η²) equals the η-scaled form and never rounds below γ
                StepRule::Adaptive { eta } => (gamma_prev * gamma_prev + increment / (eta * eta)).sqrt(),
                StepRule::Fixed { gamma } => gamma,
            };

            let extra = gamma - gamma_prev;
            let z = if extra > T::zero() {
                prox.combined_prox(&g, &[(gamma_prev, &self.z), (extra, &x)], a)?
            } else {
                prox.combined_prox(&g, &[(gamma_prev, &self.z)], a)?
            };

            observer.on_step(&StepEvent {
                epoch: s,
                t,
                a,
                weight: gamma_prev,
                gamma_prev,
                gamma,
                increment,
                x: &x,
                z: Some(&z),
                xbar: &self.xbar,
                averaging_residual: Some(residual),
            });

            self.z = z;
            self.gamma = gamma;
            self.g_prev = g;
        }

        self.u = self.xbar.clone();
        if !last {
            self.grad_f_u = self.g_prev.clone();
        }
        schedule.end_epoch(acc);
        self.epoch = s;
        Ok(())
    }
}
