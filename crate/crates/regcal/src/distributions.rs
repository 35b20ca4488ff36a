//! Threshold grids, CDF samples, and piecewise-constant densities.
//!
//! A predictive distribution is handled through its CDF sampled on a
//! [`ThresholdGrid`]. Differencing a [`CdfGrid`] yields a
//! [`PiecewiseDensity`]: constant density on each interior segment plus
//! two tail masses outside the grid. Densities are floored at
//! [`DENSITY_FLOOR`] (with the remaining mass renormalized
//! proportionally) so log-likelihoods stay finite, and tail lookups fall
//! back to spreading the tail mass over a virtual width of half the grid
//! span.

use crate::numerics::standard_normal_cdf;
use std::sync::Arc;
use thiserror::Error;

/// Smallest reported density; keeps ln(density) finite everywhere.
pub const DENSITY_FLOOR: f64 = 1e-9;
/// Predictive standard deviations are floored here.
pub const STDDEV_FLOOR: f64 = 1e-6;
/// CDF values are clamped this far inside (0, 1) before logit transforms.
pub const CDF_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("a grid needs at least two thresholds, got {got}")]
    TooFewThresholds { got: usize },
    #[error("cannot build a grid from a degenerate target range")]
    DegenerateRange,
    #[error("thresholds must increase strictly; violation at index {index}")]
    NotIncreasing { index: usize },
    #[error("grid range must bracket the thresholds")]
    RangeDoesNotBracket,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("value {value} at index {index} outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("CDF values must be non-decreasing; violation at index {index}")]
    NotMonotone { index: usize },
    #[error("operation requires densities on the same grid")]
    GridMismatch,
    #[error("operation requires at least one input")]
    EmptyInput,
}

/// Gaussian predictive distribution for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPredictive {
    pub mean: f64,
    stddev: f64,
}

impl GaussianPredictive {
    /// Standard deviation is floored at [`STDDEV_FLOOR`] so downstream
    /// divisions never blow up on a collapsed predictive.
    pub fn new(mean: f64, stddev: f64) -> Self {
        Self {
            mean,
            stddev: stddev.max(STDDEV_FLOOR),
        }
    }

    pub fn stddev(&self) -> f64 {
        self.stddev
    }

    pub fn cdf(&self, t: f64) -> f64 {
        gaussian_cdf(t, self.mean, self.stddev)
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        let z = (y - self.mean) / self.stddev;
        -0.5 * z * z - self.stddev.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// CDF sampled on `grid`. A running max guards against sub-ulp
    /// wobble in the erf branches so the result always validates.
    pub fn cdf_grid(&self, grid: &Arc<ThresholdGrid>) -> CdfGrid {
        let mut values: Vec<f64> = grid.thresholds().iter().map(|&t| self.cdf(t)).collect();
        monotone_project(&mut values, 0.0, 1.0);
        CdfGrid::new(Arc::clone(grid), values).expect("projected Gaussian CDF always validates")
    }
}

/// P(N(mean, std^2) <= t), accurate to ~1e-15 via the erf kernel. A
/// non-positive `std` is floored like in [`GaussianPredictive::new`].
pub fn gaussian_cdf(t: f64, mean: f64, std: f64) -> f64 {
    standard_normal_cdf((t - mean) / std.max(STDDEV_FLOOR))
}

/// Strictly increasing thresholds plus the bracketing target range.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    thresholds: Vec<f64>,
    range_low: f64,
    range_high: f64,
}

impl ThresholdGrid {
    /// K equally spaced thresholds over the extended range
    /// [y_min - r/2, y_max + r/2] with r = y_max - y_min, endpoints
    /// included. The extension leaves headroom so unseen targets still
    /// fall inside the grid.
    pub fn from_range(y_min: f64, y_max: f64, k: usize) -> Result<Self, DistributionError> {
        if k < 2 {
            return Err(DistributionError::TooFewThresholds { got: k });
        }
        let r = y_max - y_min;
        if !(r > 0.0) || !r.is_finite() {
            return Err(DistributionError::DegenerateRange);
        }
        let lo = y_min - 0.5 * r;
        let hi = y_max + 0.5 * r;
        // Lerp keeps both endpoints exact.
        let thresholds = (0..k)
            .map(|i| {
                let u = i as f64 / (k - 1) as f64;
                lo * (1.0 - u) + hi * u
            })
            .collect();
        Ok(Self {
            thresholds,
            range_low: lo,
            range_high: hi,
        })
    }

    /// Arbitrary strictly increasing thresholds with an explicit range.
    pub fn from_thresholds(
        thresholds: Vec<f64>,
        range_low: f64,
        range_high: f64,
    ) -> Result<Self, DistributionError> {
        if thresholds.len() < 2 {
            return Err(DistributionError::TooFewThresholds {
                got: thresholds.len(),
            });
        }
        for i in 1..thresholds.len() {
            if !(thresholds[i] > thresholds[i - 1]) {
                return Err(DistributionError::NotIncreasing { index: i });
            }
        }
        if !(range_low <= thresholds[0] && *thresholds.last().unwrap() <= range_high) {
            return Err(DistributionError::RangeDoesNotBracket);
        }
        Ok(Self {
            thresholds,
            range_low,
            range_high,
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least two thresholds
    }

    pub fn range_low(&self) -> f64 {
        self.range_low
    }

    pub fn range_high(&self) -> f64 {
        self.range_high
    }

    pub fn span(&self) -> f64 {
        self.range_high - self.range_low
    }

    /// Virtual width over which a tail mass is spread when a density is
    /// queried outside the grid.
    pub fn tail_width(&self) -> f64 {
        0.5 * self.span()
    }

    /// Segment index of `y` under right-closed segments:
    /// 0 for y <= t_0, i for t_{i-1} < y <= t_i, K for y > t_{K-1}.
    pub fn segment_of(&self, y: f64) -> usize {
        self.thresholds.partition_point(|&t| t < y)
    }

    /// Number of mass segments including both unbounded tails.
    pub fn segment_count(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Mean and population standard deviation of the thresholds, the
    /// standardization used for threshold features.
    pub fn location_scale(&self) -> (f64, f64) {
        let k = self.thresholds.len() as f64;
        let mean = self.thresholds.iter().sum::<f64>() / k;
        let var = self
            .thresholds
            .iter()
            .map(|t| (t - mean) * (t - mean))
            .sum::<f64>()
            / k;
        (mean, var.sqrt().max(STDDEV_FLOOR))
    }
}

/// Clamp into [lo, hi] after a running max; output is non-decreasing and
/// the operation is idempotent.
pub fn monotone_project(values: &mut [f64], lo: f64, hi: f64) {
    let mut running = lo;
    for v in values.iter_mut() {
        running = running.max(*v);
        *v = running.min(hi);
    }
}

/// A predictive CDF sampled at the grid thresholds: values in [0, 1],
/// non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid {
    grid: Arc<ThresholdGrid>,
    values: Vec<f64>,
}

impl CdfGrid {
    pub fn new(grid: Arc<ThresholdGrid>, values: Vec<f64>) -> Result<Self, DistributionError> {
        if values.len() != grid.len() {
            return Err(DistributionError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(DistributionError::ValueOutOfRange { index: i, value: v });
            }
            if i > 0 && v < values[i - 1] {
                return Err(DistributionError::NotMonotone { index: i });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<ThresholdGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values pulled into [CDF_CLAMP, 1 - CDF_CLAMP] for safe logit use.
    pub fn clamped_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP))
            .collect()
    }

    /// Mass per segment including tails: K + 1 non-negative entries
    /// summing to one.
    pub fn segment_masses(&self) -> Vec<f64> {
        let k = self.values.len();
        let mut m = Vec::with_capacity(k + 1);
        m.push(self.values[0]);
        for i in 1..k {
            m.push(self.values[i] - self.values[i - 1]);
        }
        m.push(1.0 - self.values[k - 1]);
        m
    }
}

/// Piecewise-constant density over a grid: one density per interior
/// segment plus the two tail masses.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    grid: Arc<ThresholdGrid>,
    /// Length K - 1; entry i covers (t_i, t_{i+1}].
    segment_densities: Vec<f64>,
    floored: Vec<bool>,
    tail_mass_low: f64,
    tail_mass_high: f64,
}

impl PiecewiseDensity {
    /// Per-segment masses (length K + 1, tails first and last) are
    /// normalized to sum one, floored, and converted to densities. This
    /// constructor is the single path through which every density is
    /// built, so the flooring and renormalization rules hold uniformly.
    pub fn from_masses(
        grid: Arc<ThresholdGrid>,
        masses: &[f64],
    ) -> Result<Self, DistributionError> {
        let k = grid.len();
        if masses.len() != k + 1 {
            return Err(DistributionError::LengthMismatch {
                expected: k + 1,
                got: masses.len(),
            });
        }
        let total: f64 = masses.iter().sum();
        let t = grid.thresholds();
        let widths: Vec<f64> = (0..k - 1).map(|i| t[i + 1] - t[i]).collect();
        let (norm, uniform) = if total > 0.0 && total.is_finite() {
            (total, false)
        } else {
            (1.0, true)
        };
        let mut densities: Vec<f64> = if uniform {
            // Nothing to normalize: fall back to a uniform interior.
            widths.iter().map(|_| 1.0 / grid.span()).collect()
        } else {
            (0..k - 1)
                .map(|i| (masses[i + 1].max(0.0) / norm) / widths[i])
                .collect()
        };
        let mut tail_mass_low = if uniform { 0.0 } else { masses[0].max(0.0) / norm };
        let mut tail_mass_high = if uniform {
            0.0
        } else {
            masses[k].max(0.0) / norm
        };
        // Floor, then rescale only the unfloored mass so floored
        // segments keep exactly the floor and the total stays one.
        let mut floored = vec![false; densities.len()];
        let mut floored_mass = 0.0;
        let mut free_mass = tail_mass_low + tail_mass_high;
        for (i, d) in densities.iter_mut().enumerate() {
            if *d < DENSITY_FLOOR {
                *d = DENSITY_FLOOR;
                floored[i] = true;
                floored_mass += DENSITY_FLOOR * widths[i];
            } else {
                free_mass += *d * widths[i];
            }
        }
        if free_mass > 0.0 && floored_mass < 1.0 {
            let scale = (1.0 - floored_mass) / free_mass;
            for (i, d) in densities.iter_mut().enumerate() {
                if !floored[i] {
                    *d *= scale;
                }
            }
            tail_mass_low *= scale;
            tail_mass_high *= scale;
        }
        Ok(Self {
            grid,
            segment_densities: densities,
            floored,
            tail_mass_low,
            tail_mass_high,
        })
    }

    /// Finite differences of a CDF: density = mass / width per interior
    /// segment, tail masses from the CDF endpoints.
    pub fn from_cdf(cdf: &CdfGrid) -> Self {
        Self::from_masses(Arc::clone(cdf.grid()), &cdf.segment_masses())
            .expect("CDF masses always have matching length")
    }

    /// Pointwise average of densities on the same grid, renormalized
    /// through the canonical constructor.
    pub fn average(parts: &[&PiecewiseDensity]) -> Result<Self, DistributionError> {
        let first = parts.first().ok_or(DistributionError::EmptyInput)?;
        let k = first.grid.len();
        let mut acc = vec![0.0; k + 1];
        for p in parts {
            if p.grid.thresholds() != first.grid.thresholds() {
                return Err(DistributionError::GridMismatch);
            }
            for (a, m) in acc.iter_mut().zip(p.masses()) {
                *a += m;
            }
        }
        for a in acc.iter_mut() {
            *a /= parts.len() as f64;
        }
        Self::from_masses(Arc::clone(&first.grid), &acc)
    }

    pub fn grid(&self) -> &Arc<ThresholdGrid> {
        &self.grid
    }

    pub fn segment_densities(&self) -> &[f64] {
        &self.segment_densities
    }

    pub fn tail_masses(&self) -> (f64, f64) {
        (self.tail_mass_low, self.tail_mass_high)
    }

    /// Mass per segment including tails (K + 1 entries, sums to one).
    pub fn masses(&self) -> Vec<f64> {
        let t = self.grid.thresholds();
        let mut m = Vec::with_capacity(self.segment_densities.len() + 2);
        m.push(self.tail_mass_low);
        for (i, d) in self.segment_densities.iter().enumerate() {
            m.push(d * (t[i + 1] - t[i]));
        }
        m.push(self.tail_mass_high);
        m
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    /// Density at `y` with a flag marking floored lookups. Tail queries
    /// spread the tail mass over [`ThresholdGrid::tail_width`]; the
    /// result is never below [`DENSITY_FLOOR`] and never exactly zero.
    pub fn lookup(&self, y: f64) -> (f64, bool) {
        let seg = self.grid.segment_of(y);
        let k = self.grid.len();
        if seg == 0 || seg == k {
            let mass = if seg == 0 {
                self.tail_mass_low
            } else {
                self.tail_mass_high
            };
            let raw = mass / self.grid.tail_width();
            if raw < DENSITY_FLOOR {
                (DENSITY_FLOOR, true)
            } else {
                (raw, false)
            }
        } else {
            (self.segment_densities[seg - 1], self.floored[seg - 1])
        }
    }

    pub fn density_at(&self, y: f64) -> f64 {
        self.lookup(y).0
    }

    /// Exact distribution function of the piecewise-constant density:
    /// linear across each segment and across the tail windows, flat at
    /// 0/1 beyond them.
    pub fn cdf_at(&self, y: f64) -> f64 {
        let t = self.grid.thresholds();
        let k = self.grid.len();
        let tw = self.grid.tail_width();
        if y <= t[0] {
            let frac = ((y - (t[0] - tw)) / tw).clamp(0.0, 1.0);
            return self.tail_mass_low * frac;
        }
        if y > t[k - 1] {
            let frac = ((y - t[k - 1]) / tw).clamp(0.0, 1.0);
            return 1.0 - self.tail_mass_high * (1.0 - frac);
        }
        let seg = self.grid.segment_of(y); // in 1..=k-1 here
        let mut cum = self.tail_mass_low;
        for i in 0..seg - 1 {
            cum += self.segment_densities[i] * (t[i + 1] - t[i]);
        }
        cum + self.segment_densities[seg - 1] * (y - t[seg - 1])
    }

    /// [`PiecewiseDensity::cdf_at`] evaluated at every grid threshold.
    pub fn cdf_values(&self) -> Vec<f64> {
        let t = self.grid.thresholds();
        let mut out = Vec::with_capacity(t.len());
        let mut cum = self.tail_mass_low;
        out.push(cum);
        for (i, d) in self.segment_densities.iter().enumerate() {
            cum += d * (t[i + 1] - t[i]);
            out.push(cum);
        }
        out
    }
}
