#![allow(dead_code)]

use adavr::optimizers::{RunObserver, StepEvent};
use adavr::FiniteSum;

/// `f_i(x) = ½‖x − c_i‖²`, one center per component.
pub struct Centers {
    pub centers: Vec<Vec<f64>>,
}

impl Centers {
    pub fn origin(n: usize, d: usize) -> Self {
        Self { centers: vec![vec![0.0; d]; n] }
    }
}

impl FiniteSum<f64> for Centers {
    fn num_components(&self) -> usize {
        self.centers.len()
    }
    fn dim(&self) -> usize {
        self.centers[0].len()
    }
    fn value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(&self.centers[i]).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
    }
    fn accumulate_grad(&self, i: usize, x: &[f64], w: f64, out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.centers[i]) {
            *o += w * (a - c);
        }
    }
    fn smoothness_bound(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub epoch: usize,
    pub t: usize,
    pub a: f64,
    pub weight: f64,
    pub gamma_prev: f64,
    pub gamma: f64,
    pub increment: f64,
    pub x: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub xbar: Vec<f64>,
    pub residual: Option<f64>,
}

/// Stores every step and checkpoint.
#[derive(Debug, Default)]
pub struct Recorder {
    pub steps: Vec<Step>,
    pub checkpoints: Vec<(usize, Vec<f64>, u64)>,
}

impl RunObserver<f64> for Recorder {
    fn on_step(&mut self, e: &StepEvent<'_, f64>) {
        self.steps.push(Step {
            epoch: e.epoch,
            t: e.t,
            a: e.a,
            weight: e.weight,
            gamma_prev: e.gamma_prev,
            gamma: e.gamma,
            increment: e.increment,
            x: e.x.to_vec(),
            z: e.z.map(<[f64]>::to_vec),
            xbar: e.xbar.to_vec(),
            residual: e.averaging_residual,
        });
    }

    fn on_epoch_end(&mut self, epoch: usize, checkpoint: &[f64], grads: u64) {
        self.checkpoints.push((epoch, checkpoint.to_vec(), grads));
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
