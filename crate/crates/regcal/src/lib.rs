//! Distribution calibration for probabilistic regression.
//!
//! A probabilistic regressor that emits a full predictive distribution
//! can be systematically miscalibrated: the predicted probabilities
//! P(y <= t) drift from observed frequencies. This crate recalibrates
//! such models through their CDFs, evaluated on a threshold grid over the
//! target range:
//!
//! - [`empirical_calibration`] discretizes the target into segments
//!   between grid thresholds and fits one binary calibrator (logistic or
//!   beta, from [`binary_calibrators`]) per segment on the predicted
//!   segment masses, renormalizing at predict time;
//! - [`gpc_calibration`] instead learns one smooth map over
//!   (predicted CDF value, threshold) pairs with a Laplace-approximated
//!   Gaussian-process classifier, recalibrating the whole CDF curve at
//!   arbitrary thresholds.
//!
//! [`base_models`] provides the regressors being calibrated (linear
//! least squares, Bayesian ridge, GP regression), [`distributions`] the
//! grid/CDF/density plumbing, [`evaluation`] log-likelihood and
//! reliability metrics, [`data`] toy and CSV data handling, and
//! [`harness`] a seeded, repeatable cross-validation loop on top of it
//! all.
//!
//! With the default `parallel` feature, fold evaluation, per-segment
//! fits, kernel algebra, and per-instance prediction fan out over rayon;
//! disabling the feature leaves identical semantics on plain loops.

pub mod base_models;
pub mod binary_calibrators;
pub mod data;
pub mod distributions;
pub mod empirical_calibration;
pub mod evaluation;
pub mod gpc_calibration;
pub mod harness;
pub mod numerics;
pub(crate) mod parallel;
