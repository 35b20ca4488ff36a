//! Gaussian-output base regressors: ordinary least squares with a shared
//! residual scale, Bayesian ridge regression with evidence-optimized
//! precisions, and GP regression with an RBF kernel.
//!
//! All models assume pre-standardized features (the cross-validation
//! harness owns standardization) and produce a [`GaussianPredictive`]
//! per instance.

mod brr;
mod gpr;
mod ols;

pub use brr::{fit_brr, ridge_weights, BrrModel};
pub use gpr::{fit_gpr, GprModel};
pub use ols::{fit_ols, OlsModel};

use crate::distributions::GaussianPredictive;
use crate::numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaseModelError {
    #[error("no training rows")]
    EmptyData,
    #[error("{n} rows cannot identify {d} features plus noise")]
    DegenerateData { n: usize, d: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inconsistent row length at row {row}")]
    RaggedRows { row: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A fitted probabilistic regressor: one Gaussian per test instance.
pub trait BaseModel: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<GaussianPredictive, BaseModelError>;
    fn feature_count(&self) -> usize;
}

/// Validates the design matrix / target shapes shared by every fit.
pub(crate) fn check_shape(x: &[Vec<f64>], y: &[f64]) -> Result<usize, BaseModelError> {
    if x.is_empty() || y.is_empty() {
        return Err(BaseModelError::EmptyData);
    }
    if x.len() != y.len() {
        return Err(BaseModelError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let d = x[0].len();
    for (row, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(BaseModelError::RaggedRows { row });
        }
    }
    Ok(d)
}

pub(crate) fn column_means(x: &[Vec<f64>]) -> Vec<f64> {
    let d = x[0].len();
    let mut means = vec![0.0; d];
    for row in x {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= x.len() as f64;
    }
    means
}
