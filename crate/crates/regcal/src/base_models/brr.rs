//! Bayesian ridge regression with precisions set by evidence maximization.

use super::{check_shape, column_means, BaseModel, BaseModelError};
use crate::distributions::{GaussianPredictive, STDDEV_FLOOR};
use crate::numerics::{cholesky, dot, SymmetricMatrix};

/// Precisions are confined here; the fixed point cannot run away.
const PRECISION_CLAMP: (f64, f64) = (1e-12, 1e12);

#[derive(Debug, Clone)]
pub struct BrrModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Noise precision (inverse residual variance).
    pub alpha: f64,
    /// Weight-prior precision.
    pub lambda: f64,
    /// Posterior covariance of the weights, in centered coordinates.
    pub posterior_covariance: SymmetricMatrix,
    pub converged: bool,
    pub iterations: usize,
    feature_means: Vec<f64>,
}

fn gram_and_projection(xc: &[Vec<f64>], yc: &[f64]) -> (SymmetricMatrix, Vec<f64>) {
    let d = xc[0].len();
    let gram = SymmetricMatrix::from_lower_fn(d, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = xc.iter().map(|r| r[i] * r[j]).sum();
        }
    });
    let mut xty = vec![0.0; d];
    for (r, &t) in xc.iter().zip(yc) {
        for j in 0..d {
            xty[j] += r[j] * t;
        }
    }
    (gram, xty)
}

/// Penalized least squares (X'X + ridge I) w = X'y on centered data;
/// the intercept absorbs the means. Exposed because the ridge solution
/// at a fixed penalty is the lambda/alpha fixed point of [`fit_brr`],
/// which makes small-penalty limits directly checkable.
pub fn ridge_weights(
    x: &[Vec<f64>],
    y: &[f64],
    ridge: f64,
) -> Result<(Vec<f64>, f64), BaseModelError> {
    let d = check_shape(x, y)?;
    let means = column_means(x);
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let xc: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let (mut gram, xty) = gram_and_projection(&xc, &yc);
    gram.add_diagonal(ridge);
    let w = cholesky(&gram, 0.0)?.solve(&xty);
    let intercept = y_mean - dot(&w, &means);
    let _ = d;
    Ok((w, intercept))
}

/// Evidence (type-II maximum likelihood) fit. Alpha and lambda follow
/// the classic fixed point: gamma = D - lambda tr(S) effective
/// parameters, lambda <- gamma / |mu|^2, alpha <- (N - gamma) / SSE.
/// Hitting `max_iter` keeps the last iterate and clears `converged`
/// instead of failing.
pub fn fit_brr(
    x: &[Vec<f64>],
    y: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<BrrModel, BaseModelError> {
    let d = check_shape(x, y)?;
    let n = x.len();
    if n < 2 {
        return Err(BaseModelError::DegenerateData { n, d });
    }
    let means = column_means(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let (gram, xty) = gram_and_projection(&xc, &yc);

    let var_y = yc.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut alpha = if var_y > 1e-12 { 1.0 / var_y } else { 1.0 };
    let mut lambda = 1.0;

    let posterior = |alpha: f64, lambda: f64| -> Result<(SymmetricMatrix, Vec<f64>), BaseModelError> {
        let mut m = SymmetricMatrix::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let v = alpha * gram.get(i, j) + if i == j { lambda } else { 0.0 };
                m.set(i, j, v);
            }
        }
        let cov = cholesky(&m, 0.0)?.spd_inverse();
        let mut mu = cov.mul_vec(&xty);
        for w in mu.iter_mut() {
            *w *= alpha;
        }
        Ok((cov, mu))
    };

    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let (cov, mu) = posterior(alpha, lambda)?;
        let tr: f64 = cov.diagonal().iter().sum();
        let gamma = (d as f64 - lambda * tr).clamp(0.0, d as f64);
        let sse: f64 = xc
            .iter()
            .zip(&yc)
            .map(|(r, &t)| {
                let e = t - dot(&mu, r);
                e * e
            })
            .sum();
        let wnorm = dot(&mu, &mu);
        let new_lambda = (gamma / wnorm.max(1e-12)).clamp(PRECISION_CLAMP.0, PRECISION_CLAMP.1);
        let new_alpha = ((n as f64 - gamma).max(1e-12) / sse.max(1e-12))
            .clamp(PRECISION_CLAMP.0, PRECISION_CLAMP.1);
        let rel_a = (new_alpha - alpha).abs() / alpha.max(1e-12);
        let rel_l = (new_lambda - lambda).abs() / lambda.max(1e-12);
        alpha = new_alpha;
        lambda = new_lambda;
        if rel_a < tol && rel_l < tol {
            converged = true;
            break;
        }
    }
    let (posterior_covariance, weights) = posterior(alpha, lambda)?;
    let intercept = y_mean - dot(&weights, &means);
    Ok(BrrModel {
        weights,
        intercept,
        alpha,
        lambda,
        posterior_covariance,
        converged,
        iterations,
        feature_means: means,
    })
}

impl BaseModel for BrrModel {
    fn predict(&self, x: &[f64]) -> Result<GaussianPredictive, BaseModelError> {
        if x.len() != self.weights.len() {
            return Err(BaseModelError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        let mean = dot(&self.weights, x) + self.intercept;
        let xt: Vec<f64> = x.iter().zip(&self.feature_means).map(|(v, m)| v - m).collect();
        let var = 1.0 / self.alpha + dot(&xt, &self.posterior_covariance.mul_vec(&xt));
        Ok(GaussianPredictive::new(mean, var.sqrt().max(STDDEV_FLOOR)))
    }

    fn feature_count(&self) -> usize {
        self.weights.len()
    }
}
