//! Gaussian-process-classifier calibration.
//!
//! Instead of fitting one binary calibrator per grid segment, this method
//! pools every (instance, threshold) pair into a single binary
//! classification problem over the two-dimensional feature
//! z = (predicted cdf value, standardized threshold) with label
//! 1(y <= t). A GP classifier with an ARD squared-exponential kernel
//! smooths across both coordinates, so thresholds with few observations
//! borrow strength from their neighbors, and the calibrated cdf can vary
//! with the threshold location itself — something the per-segment methods
//! cannot express.
//!
//! The classifier is approximated by a Laplace posterior (see
//! [`laplace`]); kernel parameters are chosen by gradient ascent on the
//! approximate log marginal likelihood in log space.

pub mod laplace;

use std::sync::Arc;

use thiserror::Error;

use crate::distributions::{monotone_project, CdfGrid, PiecewiseDensity, ThresholdGrid};
use crate::numerics::{derived_rng, dot, gradient_ascent, SymmetricMatrix};
use crate::parallel::{for_each_chunk_mut, map_indexed};
use laplace::{
    laplace_mode, log_marginal_gradient, predictive_probability, LaplaceState, MODE_MAX_ITER,
    MODE_TOL,
};

/// Cap on pooled training pairs before uniform subsampling kicks in.
pub const DEFAULT_TRAINING_CAP: usize = 5000;

const RESTART_SEED: u64 = 0x6770_635f_7273;
/// Search box for theta = (ln variance, ln lq, ln lt). Length scales may
/// roam four decades; the signal variance is capped at 16 (prior latent
/// std 4, which already drives the logistic link to [2e-4, 1 - 2e-4]).
/// Past saturation the likelihood curvature W vanishes, the half log det
/// complexity term with it, and the approximate marginal likelihood
/// starts rewarding unfalsifiable overconfidence.
const THETA_BOX: [(f64, f64); 3] = [
    (-4.6, 2.772_588_722_239_781),
    (-4.6, 4.6),
    (-4.6, 4.6),
];

#[derive(Debug, Error)]
pub enum GpcError {
    #[error("no training pairs to fit")]
    EmptyInput,
    #[error("expected {expected} targets, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("prediction grid does not match the training grid")]
    GridMismatch,
}

/// Pooled (cdf value, standardized threshold, label) triples plus the
/// threshold standardization they were built with.
#[derive(Debug, Clone)]
pub struct GpcTrainingSet {
    q: Vec<f64>,
    t: Vec<f64>,
    labels: Vec<bool>,
    t_mean: f64,
    t_scale: f64,
}

impl GpcTrainingSet {
    /// Assemble a training set from already-standardized coordinates.
    pub fn from_parts(
        q: Vec<f64>,
        t_standardized: Vec<f64>,
        labels: Vec<bool>,
        t_mean: f64,
        t_scale: f64,
    ) -> Self {
        assert_eq!(q.len(), t_standardized.len());
        assert_eq!(q.len(), labels.len());
        GpcTrainingSet {
            q,
            t: t_standardized,
            labels,
            t_mean,
            t_scale,
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// (cdf value, standardized threshold) rows.
    pub fn features(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.q.iter().zip(&self.t).map(|(&q, &t)| (q, t))
    }

    /// Mean and scale used to standardize the threshold coordinate.
    pub fn standardization(&self) -> (f64, f64) {
        (self.t_mean, self.t_scale)
    }
}

/// Pool per-instance predicted cdfs into classification pairs. Pair
/// (i, j) carries feature (cdf_i(t_j), standardized t_j) and label
/// targets[i] <= t_j; pairs are laid out instance-major. When the pool
/// exceeds `cap`, a seeded uniform subsample (without replacement) is
/// kept, in the original instance-major order so the result is
/// deterministic in (inputs, seed).
pub fn build_gpc_training(
    predicted_cdfs: &[CdfGrid],
    targets: &[f64],
    grid: &Arc<ThresholdGrid>,
    cap: usize,
    seed: u64,
) -> Result<GpcTrainingSet, GpcError> {
    if predicted_cdfs.is_empty() {
        return Err(GpcError::EmptyInput);
    }
    if predicted_cdfs.len() != targets.len() {
        return Err(GpcError::LengthMismatch {
            expected: predicted_cdfs.len(),
            got: targets.len(),
        });
    }
    for cdf in predicted_cdfs {
        if cdf.grid().thresholds() != grid.thresholds() {
            return Err(GpcError::GridMismatch);
        }
    }
    let k = grid.len();
    let n = targets.len();
    let total = n * k;
    let cap = cap.max(1);
    let (t_mean, t_scale) = grid.location_scale();

    let keep: Vec<usize> = if total > cap {
        let mut idx =
            rand::seq::index::sample(&mut crate::numerics::seeded_rng(seed), total, cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..total).collect()
    };

    let mut q = Vec::with_capacity(keep.len());
    let mut t = Vec::with_capacity(keep.len());
    let mut labels = Vec::with_capacity(keep.len());
    for &flat in &keep {
        let (i, j) = (flat / k, flat % k);
        let threshold = grid.thresholds()[j];
        q.push(predicted_cdfs[i].values()[j]);
        t.push((threshold - t_mean) / t_scale);
        labels.push(targets[i] <= threshold);
    }
    Ok(GpcTrainingSet {
        q,
        t,
        labels,
        t_mean,
        t_scale,
    })
}

/// A fitted GP classifier: kernel parameters, the Laplace state at the
/// posterior mode, and the training set it conditions on.
#[derive(Debug, Clone)]
pub struct GpcModel {
    pub kernel_variance: f64,
    pub length_scale_q: f64,
    pub length_scale_t: f64,
    pub log_marginal: f64,
    /// Whether the final mode search met its gradient tolerance.
    pub converged: bool,
    training: GpcTrainingSet,
    state: LaplaceState,
}

fn build_kernel(q: &[f64], t: &[f64], v: f64, lq: f64, lt: f64) -> SymmetricMatrix {
    let n = q.len();
    SymmetricMatrix::from_lower_fn(n, |i, row| {
        for (j, out) in row.iter_mut().enumerate() {
            let dq = (q[i] - q[j]) / lq;
            let dt = (t[i] - t[j]) / lt;
            *out = v * (-0.5 * (dq * dq + dt * dt)).exp();
        }
    })
}

/// Fit kernel parameters by restarted gradient ascent on the Laplace log
/// marginal likelihood over theta = (ln variance, ln lq, ln lt), searched
/// inside [`THETA_BOX`]. Restart zero starts at unit parameters; later
/// restarts draw each parameter log-uniformly from [0.1, 10] under a
/// fixed stream, so fits are fully deterministic. Mode searches
/// warm-start from the previous evaluation within each restart.
pub fn fit_gpc(training: GpcTrainingSet, restarts: usize, tol: f64) -> GpcModel {
    let n = training.len();
    if n == 0 {
        let state = laplace_mode(
            &SymmetricMatrix::zeros(0),
            &[],
            None,
            MODE_TOL,
            MODE_MAX_ITER,
        );
        return GpcModel {
            kernel_variance: 1.0,
            length_scale_q: 1.0,
            length_scale_t: 1.0,
            log_marginal: 0.0,
            converged: true,
            training,
            state,
        };
    }

    let budget = if n <= 300 { 50 } else { 30 };
    let q = training.q.clone();
    let t = training.t.clone();
    let labels = training.labels.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in 0..restarts.max(1) {
        let start = if r == 0 {
            vec![0.0; 3]
        } else {
            use rand::Rng;
            let mut rng = derived_rng(RESTART_SEED, &[r as u64]);
            (0..3)
                .map(|_| rng.random_range(-std::f64::consts::LN_10..std::f64::consts::LN_10))
                .collect()
        };
        let mut warm: Option<Vec<f64>> = None;
        let result = gradient_ascent(
            |theta| {
                if theta
                    .iter()
                    .zip(&THETA_BOX)
                    .any(|(&x, &(lo, hi))| x < lo || x > hi)
                {
                    return (f64::NEG_INFINITY, vec![0.0; 3]);
                }
                let (v, lq, lt) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
                let kernel = build_kernel(&q, &t, v, lq, lt);
                let state = laplace_mode(&kernel, &labels, warm.as_deref(), MODE_TOL, MODE_MAX_ITER);
                let grad = log_marginal_gradient(&kernel, &q, &t, &state, (lq, lt));
                let value = state.log_marginal;
                warm = Some(state.a);
                (value, grad)
            },
            &start,
            tol,
            budget,
        );
        if result.objective.is_finite()
            && best.as_ref().map_or(true, |(b, _)| result.objective > *b)
        {
            best = Some((result.objective, result.solution));
        }
    }
    let theta = best.map(|(_, s)| s).unwrap_or_else(|| vec![0.0; 3]);
    let (v, lq, lt) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
    let kernel = build_kernel(&q, &t, v, lq, lt);
    let state = laplace_mode(&kernel, &labels, None, MODE_TOL, MODE_MAX_ITER);
    GpcModel {
        kernel_variance: v,
        length_scale_q: lq,
        length_scale_t: lt,
        log_marginal: state.log_marginal,
        converged: state.converged,
        training,
        state,
    }
}

impl GpcModel {
    /// Condition on a training set with fixed kernel parameters.
    pub fn with_hyperparameters(
        training: GpcTrainingSet,
        kernel_variance: f64,
        length_scale_q: f64,
        length_scale_t: f64,
    ) -> GpcModel {
        let kernel = build_kernel(
            &training.q,
            &training.t,
            kernel_variance,
            length_scale_q,
            length_scale_t,
        );
        let state = laplace_mode(&kernel, &training.labels, None, MODE_TOL, MODE_MAX_ITER);
        GpcModel {
            kernel_variance,
            length_scale_q,
            length_scale_t,
            log_marginal: state.log_marginal,
            converged: state.converged,
            training,
            state,
        }
    }

    /// Smoothed calibrated probabilities for (cdf value, raw threshold)
    /// pairs. Thresholds are standardized with the training-set stats;
    /// an empty model returns the prior 1/2 everywhere.
    pub fn predict_probabilities(&self, q: &[f64], thresholds: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), thresholds.len());
        let m = q.len();
        let n = self.training.len();
        if n == 0 {
            return vec![0.5; m];
        }
        let (v, lq, lt) = (
            self.kernel_variance,
            self.length_scale_q,
            self.length_scale_t,
        );
        let ts: Vec<f64> = thresholds
            .iter()
            .map(|&x| (x - self.training.t_mean) / self.training.t_scale)
            .collect();
        // Cross-covariance rows, reused in place: first k*, then after
        // scaling by W^1/2 and a triangular solve, the vector whose norm
        // gives the posterior variance reduction.
        let mut rows = vec![0.0; m * n];
        let tq = &self.training.q;
        let tt = &self.training.t;
        for_each_chunk_mut(&mut rows, n, |j, row| {
            for (i, out) in row.iter_mut().enumerate() {
                let dq = (q[j] - tq[i]) / lq;
                let dt = (ts[j] - tt[i]) / lt;
                *out = v * (-0.5 * (dq * dq + dt * dt)).exp();
            }
        });
        let mu: Vec<f64> =
            map_indexed(m, |j| dot(&rows[j * n..(j + 1) * n], &self.state.grad_residual));
        let w = &self.state.w_sqrt;
        let chol = &self.state.chol_b;
        for_each_chunk_mut(&mut rows, n, |_, row| {
            for (x, &wi) in row.iter_mut().zip(w) {
                *x *= wi;
            }
            chol.solve_lower_in_place(row);
        });
        map_indexed(m, |j| {
            let r = &rows[j * n..(j + 1) * n];
            let var = (v - dot(r, r)).max(0.0);
            predictive_probability(mu[j], var)
        })
    }

    pub fn training(&self) -> &GpcTrainingSet {
        &self.training
    }
}

/// Calibrate a predicted cdf: smooth each (cdf value, threshold) pair
/// through the classifier, then project back onto a valid distribution
/// function. The prediction grid may be finer than the training grid —
/// thresholds are standardized with the stats stored at build time.
pub fn predict_gpc_cdf(model: &GpcModel, predicted: &CdfGrid) -> CdfGrid {
    let grid = predicted.grid();
    let mut p = model.predict_probabilities(predicted.values(), grid.thresholds());
    monotone_project(&mut p, 0.0, 1.0);
    CdfGrid::new(Arc::clone(grid), p).expect("projected values form a valid cdf")
}

/// Piecewise-constant density of the calibrated cdf.
pub fn predict_gpc_density(model: &GpcModel, predicted: &CdfGrid) -> PiecewiseDensity {
    PiecewiseDensity::from_cdf(&predict_gpc_cdf(model, predicted))
}
