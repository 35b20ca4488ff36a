//! Shared numeric kernels: stable logistic/erf scalars, dense symmetric
//! linear algebra with jittered Cholesky factorization, Newton and
//! gradient-ascent optimizers, a finite-difference gradient check, and
//! seeded RNG streams.

mod cholesky;
mod matrix;
mod newton;
mod rng;
mod special;

pub use cholesky::{cholesky, CholeskyFactor, JITTER_CAP};
pub use matrix::{dot, SymmetricMatrix};
pub use newton::{
    check_gradient, gradient_ascent, newton_minimize, AscentResult, NewtonObjective, NewtonResult,
};
pub use rng::{derived_rng, seeded_rng, SeedRng};
pub use special::{erf, erfc, log_sigmoid, logit, logit_clamped, sigmoid, standard_normal_cdf};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not positive definite even with diagonal jitter up to {jitter_limit}")]
    NotPositiveDefinite { jitter_limit: f64 },
    #[error("matrix entry ({row}, {col}) breaks symmetry")]
    NotSymmetric { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("logit argument {value} outside (0, 1)")]
    LogitDomain { value: f64 },
    #[error("objective is not finite at the start point")]
    NonFiniteObjective,
}
