//! Ordinary least squares with a single shared residual scale.

use super::{check_shape, BaseModel, BaseModelError};
use crate::distributions::{GaussianPredictive, STDDEV_FLOOR};
use crate::numerics::{cholesky, dot, SymmetricMatrix};

#[derive(Debug, Clone)]
pub struct OlsModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Homoscedastic predictive scale, sqrt(SSE / (N - D - 1)), floored.
    pub residual_std: f64,
}

/// Least-squares fit through the normal equations on the design matrix
/// augmented with an intercept column. A rank-deficient Gram matrix is
/// rescued by the Cholesky jitter ladder rather than reported.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsModel, BaseModelError> {
    let d = check_shape(x, y)?;
    let n = x.len();
    if n <= d + 1 {
        return Err(BaseModelError::DegenerateData { n, d });
    }
    // Gram matrix of [X | 1] and its projection of y.
    let m = SymmetricMatrix::from_lower_fn(d + 1, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x
                .iter()
                .map(|r| {
                    let a = if i == d { 1.0 } else { r[i] };
                    let b = if j == d { 1.0 } else { r[j] };
                    a * b
                })
                .sum();
        }
    });
    let mut rhs = vec![0.0; d + 1];
    for (r, &t) in x.iter().zip(y) {
        for j in 0..d {
            rhs[j] += r[j] * t;
        }
        rhs[d] += t;
    }
    let beta = cholesky(&m, 0.0)?.solve(&rhs);
    let intercept = beta[d];
    let weights = beta[..d].to_vec();
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &t)| {
            let e = t - dot(&weights, r) - intercept;
            e * e
        })
        .sum();
    let residual_std = (sse / (n - d - 1) as f64).sqrt().max(STDDEV_FLOOR);
    Ok(OlsModel {
        weights,
        intercept,
        residual_std,
    })
}

impl BaseModel for OlsModel {
    fn predict(&self, x: &[f64]) -> Result<GaussianPredictive, BaseModelError> {
        if x.len() != self.weights.len() {
            return Err(BaseModelError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(GaussianPredictive::new(
            dot(&self.weights, x) + self.intercept,
            self.residual_std,
        ))
    }

    fn feature_count(&self) -> usize {
        self.weights.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn exact_line_recovers_coefficients_and_floors_scale() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = fit_ols(&x, &y).unwrap();
        assert_relative_eq!(m.weights[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(m.intercept, 1.0, epsilon = 1e-9);
        assert_eq!(m.residual_std, STDDEV_FLOOR);
    }

    #[test]
    fn zero_features_fall_back_to_intercept() {
        let x: Vec<Vec<f64>> = vec![vec![0.0]; 40];
        let y: Vec<f64> = (0..40).map(|i| 5.0 + if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let m = fit_ols(&x, &y).unwrap();
        assert_relative_eq!(m.intercept, 5.0, epsilon = 1e-4);
        // Shared scale equals the residual sample std with D+1 = 2
        // parameters spent.
        let expected = (40.0 * 0.25 / 38.0f64).sqrt();
        assert_relative_eq!(m.residual_std, expected, epsilon = 1e-4);
    }

    #[test]
    fn degenerate_sample_size_is_an_error() {
        let x: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 1.0]];
        let y = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            fit_ols(&x, &y),
            Err(BaseModelError::DegenerateData { n: 3, d: 2 })
        ));
    }

    // Row-reduce [A | b] with partial pivoting; an independent solve path
    // for cross-checking the Cholesky route.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn random_problem_matches_elimination_oracle() {
        let mut rng = crate::numerics::seeded_rng(42);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 1.5 * r[0] - 0.7 * r[1] + 0.2 * r[2] + rng.random_range(-0.1..0.1))
            .collect();
        let m = fit_ols(&x, &y).unwrap();

        // Same normal equations, solved by Gaussian elimination instead.
        let mut a = vec![vec![0.0; 4]; 4];
        let mut rhs = vec![0.0; 4];
        for (r, &t) in x.iter().zip(&y) {
            let aug = [r[0], r[1], r[2], 1.0];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] += aug[i] * aug[j];
                }
                rhs[i] += aug[i] * t;
            }
        }
        let beta = gauss_solve(a, rhs);
        for j in 0..3 {
            assert_relative_eq!(m.weights[j], beta[j], epsilon = 1e-8);
        }
        assert_relative_eq!(m.intercept, beta[3], epsilon = 1e-8);
    }

    #[test]
    fn residuals_are_orthogonal_to_features() {
        let mut rng = crate::numerics::seeded_rng(7);
        let x: Vec<Vec<f64>> = (0..150)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r[0] - 2.0 * r[3] + rng.random_range(-0.5..0.5))
            .collect();
        let m = fit_ols(&x, &y).unwrap();
        for j in 0..4 {
            let mut num = 0.0;
            let mut scale = 0.0;
            for (r, &t) in x.iter().zip(&y) {
                let e = t - dot(&m.weights, r) - m.intercept;
                num += e * r[j];
                scale += (e * r[j]).abs();
            }
            assert!(num.abs() / scale.max(1e-12) < 1e-6);
        }
    }

    #[test]
    fn predict_is_affine_with_shared_scale() {
        let m = OlsModel {
            weights: vec![2.0],
            intercept: 1.0,
            residual_std: 0.5,
        };
        let p = m.predict(&[3.0]).unwrap();
        assert_eq!(p.mean, 7.0);
        assert_eq!(p.stddev(), 0.5);
        assert!(matches!(
            m.predict(&[1.0, 2.0]),
            Err(BaseModelError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }
}
