//! Epoch-accelerated mirror-descent method (AdaVRAG, options I and II) and
//! its known-smoothness variant (VRAG).

use super::{GradCounter, IndexStream, RunError, RunObserver, StepEvent};
use crate::geometry::ProxTerm;
use crate::linalg;
use crate::problem::{FiniteSum, Point};
use crate::scalar::Scalar;
use crate::schedules::{vrag_step_weight, AdaVragSchedule};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MirrorRule<T> {
    /// `γ_t = γ_{t−1}·sqrt(1 + ‖x_t − x_{t−1}‖²/η²)`.
    OptionI { eta: T },
    /// `γ_t = γ_{t−1} + ‖x_t − x_{t−1}‖²/η²`.
    OptionII { eta: T },
    /// Weight `β(2−a)a/(1−a)` for the whole epoch.
    Fixed { beta: T },
}

#[derive(Debug, Clone)]
pub struct AdaVragState<T> {
    pub x: Point<T>,
    pub xbar: Point<T>,
    /// Checkpoint `u^(s−1)`.
    pub u: Point<T>,
    /// Running `Σ_t x̄_t` of the current epoch.
    pub u_accum: Point<T>,
    pub grad_f_u: Point<T>,
    pub gamma: T,
    pub epoch: usize,
}

impl<T: Scalar> AdaVragState<T> {
    /// `x_0 = u^(0)`, `γ_0 = gamma0`.
    pub fn init(u0: &[T], gamma0: T) -> Self {
        Self {
            x: u0.to_vec(),
            xbar: u0.to_vec(),
            u: u0.to_vec(),
            u_accum: vec![T::zero(); u0.len()],
            grad_f_u: Vec::new(),
            gamma: gamma0,
            epoch: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn run_epoch<P, R, O>(
        &mut self,
        problem: &P,
        schedule: &AdaVragSchedule,
        prox: &ProxTerm<T>,
        rule: MirrorRule<T>,
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
        let a: T = schedule.a(s)?;
        let keep = T::one() - a;
        let q: T = schedule.q(s)?;
        let fixed_weight = match rule {
            MirrorRule::Fixed { beta } => Some(vrag_step_weight(a, beta)?),
            _ => None,
        };

        self.xbar = linalg::lincomb(a, &self.x, keep, &self.u);
        self.grad_f_u = counter.full_grad(problem, &self.u)?;
        self.u_accum.iter_mut().for_each(|v| *v = T::zero());

        let mut indices = IndexStream::new(problem.num_components());
        for t in 1..=len {
            let i = indices.next(rng);

            let g = counter.vr_gradient(problem, i, &self.xbar, &self.u, &self.grad_f_u)?;
            let weight = fixed_weight.unwrap_or(self.gamma * q);
            let x = prox.combined_prox(&g, &[(weight, &self.x)], T::one())?;
            self.xbar = linalg::lincomb(a, &x, keep, &self.u);
            linalg::axpy(T::one(), &self.xbar, &mut self.u_accum);

            let moved = linalg::dist_sq(&x, &self.x);
            let gamma_prev = self.gamma;
            self.gamma = match rule {
                MirrorRule::OptionI { eta } => gamma_prev * (T::one() + moved / (eta * eta)).sqrt(),
                MirrorRule::OptionII { eta } => gamma_prev + moved / (eta * eta),
                MirrorRule::Fixed { .. } => gamma_prev,
            };

            observer.on_step(&StepEvent {
                epoch: s,
                t,
                a,
                weight,
                gamma_prev,
                gamma: self.gamma,
                increment: moved,
                x: &x,
                z: None,
                xbar: &self.xbar,
                averaging_residual: None,
            });
            self.x = x;
        }

        self.u = self.u_accum.iter().map(|&v| v / T::of_usize(len)).collect();
        self.epoch = s;
        Ok(())
    }
}
