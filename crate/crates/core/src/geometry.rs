//! Feasible regions and the closed-form proximal sub-steps built on projection.

use crate::linalg;
use crate::problem::Point;
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("prox step must be nonnegative, got {0}")]
    NegativeStep(f64),
    #[error("combined prox needs at least one quadratic term")]
    NoQuadratic,
    #[error("quadratic weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleRegion<T> {
    Unconstrained,
    Ball { center: Point<T>, radius: T },
}

impl<T: Scalar> FeasibleRegion<T> {
    pub fn ball(center: Point<T>, radius: T) -> Result<Self, GeometryError> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(GeometryError::InvalidRegion(format!("radius must be positive, got {radius}")));
        }
        if !linalg::all_finite(&center) {
            return Err(GeometryError::InvalidRegion("non-finite ball center".into()));
        }
        Ok(FeasibleRegion::Ball { center, radius })
    }

    /// Diameter `D`, `None` when unbounded.
    pub fn diameter(&self) -> Option<T> {
        match self {
            FeasibleRegion::Unconstrained => None,
            FeasibleRegion::Ball { radius, .. } => Some(T::lit(2.0) * *radius),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.diameter().is_some()
    }

    pub fn contains(&self, x: &[T], tol: T) -> bool {
        match self {
            FeasibleRegion::Unconstrained => true,
            FeasibleRegion::Ball { center, radius } => linalg::dist(x, center) <= *radius + tol,
        }
    }

    /// Euclidean projection; the identity on feasible points.
    pub fn project(&self, x: &[T]) -> Point<T> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, x: &mut [T]) {
        if let FeasibleRegion::Ball { center, radius } = self {
            debug_assert_eq!(x.len(), center.len());
            let dist = linalg::dist(x, center);
            if dist > *radius {
                let shrink = *radius / dist;
                for (xi, &ci) in x.iter_mut().zip(center) {
                    *xi = ci + (*xi - ci) * shrink;
                }
            }
        }
    }

    fn check_dim(&self, d: usize) -> Result<(), GeometryError> {
        match self {
            FeasibleRegion::Ball { center, .. } if center.len() != d => {
                Err(GeometryError::DimensionMismatch { expected: center.len(), got: d })
            }
            _ => Ok(()),
        }
    }
}

/// Free function form of [`FeasibleRegion::project`].
pub fn project<T: Scalar>(region: &FeasibleRegion<T>, x: &[T]) -> Point<T> {
    region.project(x)
}

/// Composite term `h` whose proximal map is available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxTerm<T> {
    Zero,
    /// Indicator of a ball; `h(x) = 0` inside and `+∞` outside.
    Indicator { region: FeasibleRegion<T> },
}

impl<T: Scalar> ProxTerm<T> {
    pub fn indicator(region: FeasibleRegion<T>) -> Result<Self, GeometryError> {
        match region {
            FeasibleRegion::Ball { .. } => Ok(ProxTerm::Indicator { region }),
            FeasibleRegion::Unconstrained => Err(GeometryError::InvalidRegion(
                "indicator term requires a ball region".into(),
            )),
        }
    }

    /// Value of `h` at `x` (with `tol` slack on the indicator boundary).
    pub fn value(&self, x: &[T], tol: T) -> T {
        match self {
            ProxTerm::Zero => T::zero(),
            ProxTerm::Indicator { region } => {
                if region.contains(x, tol) {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
        }
    }

    /// The region the term confines iterates to.
    pub fn region(&self) -> FeasibleRegion<T> {
        match self {
            ProxTerm::Zero => FeasibleRegion::Unconstrained,
            ProxTerm::Indicator { region } => region.clone(),
        }
    }

    /// `argmin_x t·h(x) + ½‖x − v‖²`.
    pub fn prox(&self, v: &[T], t: T) -> Result<Point<T>, GeometryError> {
        if t < T::zero() {
            return Err(GeometryError::NegativeStep(t.as_f64()));
        }
        match self {
            ProxTerm::Zero => Ok(v.to_vec()),
            ProxTerm::Indicator { region } => {
                region.check_dim(v.len())?;
                Ok(region.project(v))
            }
        }
    }

    /// Exact minimizer over `x` of
    /// `a⟨g, x⟩ + a·h(x) + Σ_k (w_k/2)‖x − c_k‖²`.
    ///
    /// The quadratics collapse to one with weight `W = Σ w_k` centred at the
    /// weighted mean, so the answer is `prox(h, (Σ w_k c_k − a·g)/W, a/W)`.
    pub fn combined_prox(&self, g: &[T], terms: &[(T, &[T])], a: T) -> Result<Point<T>, GeometryError> {
        if terms.is_empty() {
            return Err(GeometryError::NoQuadratic);
        }
        let d = g.len();
        let mut total = T::zero();
        let mut center = vec![T::zero(); d];
        for &(w, c) in terms {
            if !(w > T::zero()) {
                return Err(GeometryError::NonPositiveWeight(w.as_f64()));
            }
            if c.len() != d {
                return Err(GeometryError::DimensionMismatch { expected: d, got: c.len() });
            }
            total = total + w;
            linalg::axpy(w, c, &mut center);
        }
        linalg::axpy(-a, g, &mut center);
        linalg::scale(T::one() / total, &mut center);
        self.prox(&center, a / total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_ball() -> FeasibleRegion<f64> {
        FeasibleRegion::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(unit_ball().project(&[3.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(unit_ball().project(&[0.3, -0.4]), vec![0.3, -0.4]);
        let shifted = FeasibleRegion::ball(vec![1.0, 0.0], 2.0).unwrap();
        assert_eq!(shifted.project(&[5.0, 0.0]), vec![3.0, 0.0]);
        assert_eq!(FeasibleRegion::Unconstrained.project(&[7.0, 8.0]), vec![7.0, 8.0]);
    }

    #[test]
    fn prox_examples() {
        let zero = ProxTerm::<f64>::Zero;
        assert_eq!(zero.prox(&[1.0, -2.0], 7.0).unwrap(), vec![1.0, -2.0]);
        let ind = ProxTerm::indicator(unit_ball()).unwrap();
        assert_eq!(ind.prox(&[0.0, 2.0], 0.3).unwrap(), vec![0.0, 1.0]);
        assert_eq!(ind.prox(&[0.5, 0.0], 11.0).unwrap(), vec![0.5, 0.0]);
        assert_eq!(ind.prox(&[0.5, 0.0], -1.0), Err(GeometryError::NegativeStep(-1.0)));
        assert!(ProxTerm::indicator(FeasibleRegion::<f64>::Unconstrained).is_err());
    }

    #[test]
    fn combined_prox_examples() {
        let zero = ProxTerm::<f64>::Zero;
        let origin = [0.0, 0.0];
        assert_eq!(zero.combined_prox(&[2.0, 0.0], &[(2.0, &origin)], 1.0).unwrap(), vec![-1.0, 0.0]);

        let ind = ProxTerm::indicator(unit_ball()).unwrap();
        assert_eq!(ind.combined_prox(&[-4.0, 0.0], &[(1.0, &origin)], 1.0).unwrap(), vec![1.0, 0.0]);

        let c1 = [2.0, 0.0];
        let c2 = [-2.0, 0.0];
        assert_eq!(
            zero.combined_prox(&[0.0, 0.0], &[(1.0, &c1), (3.0, &c2)], 1.0).unwrap(),
            vec![-1.0, 0.0]
        );
    }

    #[test]
    fn combined_prox_errors() {
        let zero = ProxTerm::<f64>::Zero;
        assert_eq!(zero.combined_prox(&[1.0], &[], 1.0), Err(GeometryError::NoQuadratic));
        let c = [0.0];
        assert_eq!(
            zero.combined_prox(&[1.0], &[(0.0, &c)], 1.0),
            Err(GeometryError::NonPositiveWeight(0.0))
        );
        assert!(zero.combined_prox(&[1.0], &[(1.0, &[0.0, 0.0][..])], 1.0).is_err());
    }

    fn objective(h: &ProxTerm<f64>, g: &[f64], terms: &[(f64, Vec<f64>)], a: f64, x: &[f64]) -> f64 {
        let mut v = a * linalg::dot(g, x) + a * h.value(x, 1e-12);
        for (w, c) in terms {
            v += 0.5 * w * linalg::dist_sq(x, c);
        }
        v
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0..5.0f64, 3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn combined_prox_minimizes(
            g in vec3(),
            c1 in vec3(),
            c2 in vec3(),
            w1 in 0.01..10.0f64,
            w2 in 0.01..10.0f64,
            a in 0.01..5.0f64,
            radius in 0.5..4.0f64,
            constrained in any::<bool>(),
            perturb in prop::collection::vec(vec3(), 50),
        ) {
            let h = if constrained {
                ProxTerm::indicator(FeasibleRegion::ball(vec![0.0; 3], radius).unwrap()).unwrap()
            } else {
                ProxTerm::Zero
            };
            let terms = vec![(w1, c1), (w2, c2)];
            let refs: Vec<(f64, &[f64])> = terms.iter().map(|(w, c)| (*w, c.as_slice())).collect();
            let x = h.combined_prox(&g, &refs, a).unwrap();
            let best = objective(&h, &g, &terms, a, &x);
            prop_assert!(best.is_finite());
            let region = h.region();
            for p in &perturb {
                let cand: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + 0.1 * pi).collect();
                let cand = region.project(&cand);
                let val = objective(&h, &g, &terms, a, &cand);
                prop_assert!(best <= val + 1e-9 * (1.0 + val.abs()));
            }
        }

        #[test]
        fn single_quadratic_reduces_to_prox(g in vec3(), c in vec3(), w in 0.01..10.0f64, a in 0.01..5.0f64) {
            let h = ProxTerm::indicator(FeasibleRegion::ball(vec![0.0; 3], 2.0).unwrap()).unwrap();
            let x = h.combined_prox(&g, &[(w, &c)], a).unwrap();
            let shifted: Vec<f64> = c.iter().zip(&g).map(|(ci, gi)| ci - a / w * gi).collect();
            let y = h.prox(&shifted, a / w).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert!((xi - yi).abs() <= 1e-12 * (1.0 + yi.abs()));
            }
        }

        #[test]
        fn projection_is_nonexpansive_and_idempotent(x in vec3(), y in vec3(), radius in 0.1..3.0f64) {
            let ball = FeasibleRegion::ball(vec![0.5, -0.5, 1.0], radius).unwrap();
            let px = ball.project(&x);
            let py = ball.project(&y);
            prop_assert!(linalg::dist(&px, &py) <= linalg::dist(&x, &y) + 1e-12);
            prop_assert!(ball.contains(&px, 1e-12));
            let ppx = ball.project(&px);
            for (a, b) in px.iter().zip(&ppx) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
