//! Distribution calibration by segment-wise binary calibration.
//!
//! The target axis is discretized by a threshold grid into K+1 segments
//! (two of them unbounded tails). For every segment a one-vs-rest binary
//! calibrator is fitted on the predicted segment mass against whether
//! the observed target fell inside. At prediction time the calibrated
//! per-segment values are renormalized into a probability vector and
//! exposed as a piecewise-constant density.

use crate::binary_calibrators::{
    apply_beta, apply_logistic, fit_beta, fit_logistic, BetaCalibrator, LogisticCalibrator,
};
use crate::distributions::{CdfGrid, PiecewiseDensity, ThresholdGrid};
use crate::parallel::map_indexed;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmpiricalKind {
    /// Per-segment logistic calibration on the raw mass.
    Logistic,
    /// Per-segment beta calibration on the mass's log features.
    Beta,
}

impl std::fmt::Display for EmpiricalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmpiricalKind::Logistic => write!(f, "e-logistic"),
            EmpiricalKind::Beta => write!(f, "e-beta"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SegmentCalibrator {
    Logistic(LogisticCalibrator),
    Beta(BetaCalibrator),
}

impl SegmentCalibrator {
    fn apply(&self, s: f64) -> f64 {
        match self {
            SegmentCalibrator::Logistic(c) => apply_logistic(c, s),
            SegmentCalibrator::Beta(c) => apply_beta(c, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmpiricalError {
    #[error("input CDF does not live on the calibrator's grid")]
    GridMismatch,
    #[error("expected {expected} CDFs, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// One-vs-rest calibrators for every segment of a grid.
#[derive(Debug, Clone)]
pub struct EmpiricalCalibrator {
    grid: Arc<ThresholdGrid>,
    /// One calibrator per segment, tails included (length K + 1).
    per_segment: Vec<SegmentCalibrator>,
    kind: EmpiricalKind,
}

impl EmpiricalCalibrator {
    pub fn grid(&self) -> &Arc<ThresholdGrid> {
        &self.grid
    }

    pub fn kind(&self) -> EmpiricalKind {
        self.kind
    }

    #[cfg(test)]
    fn from_parts(
        grid: Arc<ThresholdGrid>,
        kind: EmpiricalKind,
        per_segment: Vec<SegmentCalibrator>,
    ) -> Self {
        assert_eq!(per_segment.len(), grid.segment_count());
        Self {
            grid,
            per_segment,
            kind,
        }
    }
}

/// Fit one binary calibrator per segment. Inputs are the predicted
/// masses q_i - q_{i-1} (with virtual bounds 0 and 1), labels whether
/// the target landed in the segment. Near-empty tail classes fall back
/// to the binary module's one-class constant; segments fit in parallel.
pub fn fit_empirical(
    kind: EmpiricalKind,
    grid: &Arc<ThresholdGrid>,
    predicted_cdfs: &[CdfGrid],
    targets: &[f64],
) -> Result<EmpiricalCalibrator, EmpiricalError> {
    if predicted_cdfs.len() != targets.len() {
        return Err(EmpiricalError::LengthMismatch {
            expected: targets.len(),
            got: predicted_cdfs.len(),
        });
    }
    for cdf in predicted_cdfs {
        if cdf.grid().thresholds() != grid.thresholds() {
            return Err(EmpiricalError::GridMismatch);
        }
    }
    let masses: Vec<Vec<f64>> = predicted_cdfs.iter().map(|c| c.segment_masses()).collect();
    let segment_of: Vec<usize> = targets.iter().map(|&y| grid.segment_of(y)).collect();
    let segments = grid.segment_count();
    let per_segment = map_indexed(segments, |s| {
        let scores: Vec<f64> = masses.iter().map(|m| m[s]).collect();
        let labels: Vec<bool> = segment_of.iter().map(|&g| g == s).collect();
        match kind {
            EmpiricalKind::Logistic => SegmentCalibrator::Logistic(fit_logistic(&scores, &labels)),
            EmpiricalKind::Beta => SegmentCalibrator::Beta(fit_beta(&scores, &labels)),
        }
    });
    Ok(EmpiricalCalibrator {
        grid: Arc::clone(grid),
        per_segment,
        kind,
    })
}

/// Calibrated probability vector over the K+1 segments:
/// q_i = c_i(p_i) / sum_j c_j(p_j). Non-negative, sums to one. A fully
/// vanished numerator (impossible for strictly positive sigmoid outputs,
/// but representable once they underflow) yields the uniform vector.
pub fn calibrate_masses(
    c: &EmpiricalCalibrator,
    q: &CdfGrid,
) -> Result<Vec<f64>, EmpiricalError> {
    if q.grid().thresholds() != c.grid.thresholds() {
        return Err(EmpiricalError::GridMismatch);
    }
    let p = q.segment_masses();
    let mut out: Vec<f64> = c
        .per_segment
        .iter()
        .zip(&p)
        .map(|(cal, &pi)| cal.apply(pi))
        .collect();
    let total: f64 = out.iter().sum();
    if total > 0.0 && total.is_finite() {
        for v in out.iter_mut() {
            *v /= total;
        }
    } else {
        let u = 1.0 / out.len() as f64;
        out.fill(u);
    }
    Ok(out)
}

/// Calibrated piecewise-constant density for one predicted CDF.
pub fn empirical_density(
    c: &EmpiricalCalibrator,
    q: &CdfGrid,
) -> Result<PiecewiseDensity, EmpiricalError> {
    let masses = calibrate_masses(c, q)?;
    Ok(PiecewiseDensity::from_masses(Arc::clone(&c.grid), &masses)
        .expect("calibrated masses always match the grid"))
}
