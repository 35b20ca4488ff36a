//! Second-order minimization for small smooth objectives, plus a
//! first-order ascent helper and a finite-difference gradient check.
//!
//! `newton_minimize` drives the binary calibrator fits (their negative
//! log-likelihoods are log-concave, so the Hessian is positive
//! semidefinite and the jittered factorization always yields a descent
//! direction). Divergent problems — separable labels push parameters to
//! infinity — are cut off by `max_iter` and reported with
//! `converged = false` carrying the best iterate found.

use super::cholesky::cholesky;
use super::matrix::SymmetricMatrix;
use super::NumericsError;

/// Armijo sufficient-decrease constant for the backtracking line search.
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Smooth objective with analytic derivatives.
pub trait NewtonObjective {
    fn dim(&self) -> usize;
    /// Objective value only (used by the line search).
    fn value(&self, w: &[f64]) -> f64;
    /// Value, gradient, and Hessian at `w`.
    fn value_grad_hess(&self, w: &[f64], grad: &mut [f64], hess: &mut SymmetricMatrix) -> f64;
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// True iff the gradient norm reached `tol`. On `false` the solution
    /// is the best iterate seen before the iteration cap or a stalled
    /// line search.
    pub converged: bool,
}

/// Minimize `obj` from `start`. Each accepted step decreases the
/// objective (Armijo backtracking), so the sequence of accepted values is
/// monotone non-increasing.
pub fn newton_minimize(
    obj: &dyn NewtonObjective,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult, NumericsError> {
    let dim = obj.dim();
    assert_eq!(start.len(), dim);
    let mut w = start.to_vec();
    let mut grad = vec![0.0; dim];
    let mut hess = SymmetricMatrix::zeros(dim);
    let mut value = obj.value_grad_hess(&w, &mut grad, &mut hess);
    if !value.is_finite() {
        return Err(NumericsError::NonFiniteObjective);
    }
    let mut iterations = 0;
    loop {
        let gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gradient_norm <= tol {
            return Ok(NewtonResult {
                solution: w,
                objective: value,
                gradient_norm,
                iterations,
                converged: true,
            });
        }
        if iterations >= max_iter {
            return Ok(NewtonResult {
                solution: w,
                objective: value,
                gradient_norm,
                iterations,
                converged: false,
            });
        }
        // Newton direction; the jittered factorization regularizes
        // semidefinite Hessians. Fall back to steepest descent if even
        // the escalated jitter fails.
        let direction: Vec<f64> = match cholesky(&hess, 0.0) {
            Ok(f) => f.solve(&grad).iter().map(|d| -d).collect(),
            Err(_) => grad.iter().map(|g| -g).collect(),
        };
        let slope: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = w
                .iter()
                .zip(&direction)
                .map(|(x, d)| x + step * d)
                .collect();
            let candidate_value = obj.value(&candidate);
            if candidate_value.is_finite() && candidate_value <= value + ARMIJO_C * step * slope {
                w = candidate;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search exhausted: no direction of sufficient decrease
            // at representable step sizes.
            return Ok(NewtonResult {
                solution: w,
                objective: value,
                gradient_norm,
                iterations,
                converged: false,
            });
        }
        value = obj.value_grad_hess(&w, &mut grad, &mut hess);
        iterations += 1;
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximize a smooth objective by adaptive-step gradient ascent. `eval`
/// returns (value, gradient) and may carry warm-start state across calls.
/// Accepted steps grow the step size; rejected ones halve it, so the
/// accepted objective sequence is strictly increasing.
pub fn gradient_ascent(
    mut eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> AscentResult {
    let mut w = start.to_vec();
    let (mut value, mut grad) = eval(&w);
    let mut step = 0.25;
    let mut iterations = 0;
    while iterations < max_iter {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= tol {
            return AscentResult {
                solution: w,
                objective: value,
                iterations,
                converged: true,
            };
        }
        let candidate: Vec<f64> = w.iter().zip(&grad).map(|(x, g)| x + step * g).collect();
        let (cv, cg) = eval(&candidate);
        iterations += 1;
        if cv.is_finite() && cv > value {
            w = candidate;
            value = cv;
            grad = cg;
            step = (step * 1.4).min(4.0);
        } else {
            step *= 0.5;
            if step < 1e-10 {
                break;
            }
        }
    }
    AscentResult {
        solution: w,
        objective: value,
        iterations,
        converged: false,
    }
}

/// Max relative discrepancy between `analytic` and central differences of
/// `f` at `point`, using symmetric steps of size `step`. The denominator
/// guards near-zero components.
pub fn check_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    step: f64,
) -> f64 {
    assert_eq!(point.len(), analytic.len());
    let mut worst: f64 = 0.0;
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let hi = f(&x);
        x[i] = point[i] - step;
        let lo = f(&x);
        x[i] = point[i];
        let cd = (hi - lo) / (2.0 * step);
        let denom = analytic[i].abs().max(cd.abs()).max(1e-8);
        worst = worst.max((cd - analytic[i]).abs() / denom);
    }
    worst
}
