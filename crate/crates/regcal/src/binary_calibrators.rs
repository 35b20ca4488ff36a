//! Two-class probability calibrators: logistic calibration on the raw
//! score and beta calibration on its log/log-complement features.
//!
//! Both are fitted discriminatively by Newton-optimized logistic
//! regression. Beta calibration guarantees a monotone map by the usual
//! repair: a negative coefficient triggers a refit with that feature
//! dropped. Degenerate label sets (one class only) fall back to constant
//! calibrators at the Laplace-smoothed positive rate, which the
//! one-vs-rest construction upstream produces routinely.

use crate::numerics::{
    newton_minimize, sigmoid, NewtonObjective, SymmetricMatrix,
};

/// Scores are clamped this far inside (0, 1) before any log transform.
pub const SCORE_CLAMP: f64 = 1e-12;

/// L2 penalty on the non-intercept coefficients. Separable label sets
/// otherwise push the slope to infinity and Newton burns its whole
/// iteration budget inching along a flat valley; the ridge keeps the
/// optimum finite so convergence stays quadratic. At this magnitude the
/// parameter bias is far below the fits' statistical noise, and leaving
/// the intercept unpenalized keeps the mean prediction equal to the
/// positive rate exactly.
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticCalibrator {
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaCalibrator {
    /// Weight on ln s; non-negative.
    pub a: f64,
    /// Weight on -ln(1-s); non-negative.
    pub b: f64,
    /// Log-odds offset.
    pub m: f64,
}

/// c(s) = sigmoid(gamma * s + delta).
pub fn apply_logistic(c: &LogisticCalibrator, s: f64) -> f64 {
    sigmoid(c.gamma * s + c.delta)
}

/// c(s) = sigmoid(m + a ln s - b ln(1-s)), monotone for a, b >= 0.
pub fn apply_beta(c: &BetaCalibrator, s: f64) -> f64 {
    let s = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    sigmoid(c.m + c.a * s.ln() - c.b * (1.0 - s).ln())
}

/// Laplace-smoothed positive rate, strictly inside (0, 1) for any n.
fn smoothed_rate(labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos + 1) as f64 / (labels.len() + 2) as f64
}

fn smoothed_logit(labels: &[bool]) -> f64 {
    let r = smoothed_rate(labels);
    (r / (1.0 - r)).ln()
}

fn one_class(labels: &[bool]) -> bool {
    labels.iter().all(|&l| l) || labels.iter().all(|&l| !l)
}

/// Bernoulli negative log-likelihood for a linear score with intercept;
/// rows are feature vectors without the constant column.
struct LogisticNll<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
}

impl LogisticNll<'_> {
    fn eta(&self, w: &[f64], row: &[f64]) -> f64 {
        let d = row.len();
        let mut e = w[d];
        for j in 0..d {
            e += w[j] * row[j];
        }
        e
    }
}

impl NewtonObjective for LogisticNll<'_> {
    fn dim(&self) -> usize {
        self.rows[0].len() + 1
    }

    fn value(&self, w: &[f64]) -> f64 {
        let d = self.rows[0].len();
        let nll: f64 = self
            .rows
            .iter()
            .zip(self.labels)
            .map(|(row, &y)| {
                let eta = self.eta(w, row);
                let signed = if y { eta } else { -eta };
                -crate::numerics::log_sigmoid(signed)
            })
            .sum();
        nll + 0.5 * RIDGE * w[..d].iter().map(|c| c * c).sum::<f64>()
    }

    fn value_grad_hess(&self, w: &[f64], grad: &mut [f64], hess: &mut SymmetricMatrix) -> f64 {
        let d = self.rows[0].len();
        grad.fill(0.0);
        for i in 0..=d {
            for j in 0..=i {
                hess.set(i, j, 0.0);
            }
        }
        let mut value = 0.0;
        for (row, &y) in self.rows.iter().zip(self.labels) {
            let eta = self.eta(w, row);
            let p = sigmoid(eta);
            let signed = if y { eta } else { -eta };
            value -= crate::numerics::log_sigmoid(signed);
            let r = p - if y { 1.0 } else { 0.0 };
            let wgt = (p * (1.0 - p)).max(1e-12);
            for i in 0..=d {
                let xi = if i == d { 1.0 } else { row[i] };
                grad[i] += r * xi;
                for j in 0..=i {
                    let xj = if j == d { 1.0 } else { row[j] };
                    hess.set(i, j, hess.get(i, j) + wgt * xi * xj);
                }
            }
        }
        for j in 0..d {
            value += 0.5 * RIDGE * w[j] * w[j];
            grad[j] += RIDGE * w[j];
            hess.set(j, j, hess.get(j, j) + RIDGE);
        }
        value
    }
}

/// Maximum-likelihood logistic regression; returns coefficients with the
/// intercept last. Infallible: the start point is finite and separable
/// data merely stops at the iteration cap with a saturated iterate.
fn logistic_regression(rows: &[Vec<f64>], labels: &[bool]) -> Vec<f64> {
    let obj = LogisticNll { rows, labels };
    let start = vec![0.0; obj.dim()];
    match newton_minimize(&obj, &start, 1e-10, 100) {
        Ok(res) => res.solution,
        Err(_) => start, // unreachable from a zero start; keep the prior
    }
}

/// One-dimensional logistic calibration fitted on the raw scores.
/// A single-class label set yields the constant calibrator at the
/// smoothed rate.
pub fn fit_logistic(scores: &[f64], labels: &[bool]) -> LogisticCalibrator {
    assert_eq!(scores.len(), labels.len());
    if labels.is_empty() || one_class(labels) {
        return LogisticCalibrator {
            gamma: 0.0,
            delta: smoothed_logit(labels),
        };
    }
    let rows: Vec<Vec<f64>> = scores.iter().map(|&s| vec![s]).collect();
    let w = logistic_regression(&rows, labels);
    LogisticCalibrator {
        gamma: w[0],
        delta: w[1],
    }
}

// Feature layout for the beta fit. Dropping a feature re-indexes the
// remaining coefficient, so the fits are spelled out per case.
fn beta_features(scores: &[f64]) -> Vec<(f64, f64)> {
    scores
        .iter()
        .map(|&s| {
            let s = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            (s.ln(), -(1.0 - s).ln())
        })
        .collect()
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Beta calibration fitted as a two-feature logistic regression on
/// z = [ln s, -ln(1-s)]. Negative coefficients are repaired by refitting
/// without the offending feature; constant features are dropped up
/// front, so an uninformative score column degrades to a constant map.
pub fn fit_beta(scores: &[f64], labels: &[bool]) -> BetaCalibrator {
    assert_eq!(scores.len(), labels.len());
    if labels.is_empty() || one_class(labels) {
        return BetaCalibrator {
            a: 1.0,
            b: 1.0,
            m: smoothed_logit(labels),
        };
    }
    let z = beta_features(scores);
    let constant_map = BetaCalibrator {
        a: 0.0,
        b: 0.0,
        m: smoothed_logit(labels),
    };
    let z1_alive = spread(z.iter().map(|p| p.0)) > 1e-12;
    let z2_alive = spread(z.iter().map(|p| p.1)) > 1e-12;
    if !z1_alive && !z2_alive {
        return constant_map;
    }

    let fit_z2_only = |z: &[(f64, f64)]| {
        let rows: Vec<Vec<f64>> = z.iter().map(|p| vec![p.1]).collect();
        let w = logistic_regression(&rows, labels);
        if w[0] < 0.0 {
            constant_map
        } else {
            BetaCalibrator {
                a: 0.0,
                b: w[0],
                m: w[1],
            }
        }
    };
    let fit_z1_only = |z: &[(f64, f64)]| {
        let rows: Vec<Vec<f64>> = z.iter().map(|p| vec![p.0]).collect();
        let w = logistic_regression(&rows, labels);
        if w[0] < 0.0 {
            constant_map
        } else {
            BetaCalibrator {
                a: w[0],
                b: 0.0,
                m: w[1],
            }
        }
    };

    match (z1_alive, z2_alive) {
        (true, true) => {
            let rows: Vec<Vec<f64>> = z.iter().map(|p| vec![p.0, p.1]).collect();
            let w = logistic_regression(&rows, labels);
            match (w[0] < 0.0, w[1] < 0.0) {
                (false, false) => BetaCalibrator {
                    a: w[0],
                    b: w[1],
                    m: w[2],
                },
                (true, _) => fit_z2_only(&z),
                (false, true) => fit_z1_only(&z),
            }
        }
        (true, false) => fit_z1_only(&z),
        (false, true) => fit_z2_only(&z),
        (false, false) => unreachable!("handled above"),
    }
}
