//! Scoring and calibration diagnostics: mean log-likelihood of predicted
//! densities at the realized targets, and reliability-diagram data for
//! the binary events Y <= t.

use thiserror::Error;

use crate::distributions::PiecewiseDensity;
use crate::parallel::map_indexed;

pub const DEFAULT_RELIABILITY_BINS: usize = 8;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Log-density scores for a batch of predictions.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub mean_log_likelihood: f64,
    pub per_instance_log_densities: Vec<f64>,
    /// How many lookups hit the density floor (targets the model found
    /// essentially impossible).
    pub n_floored: usize,
}

/// ln density_i(target_i) for each instance. The density floor keeps
/// every term finite, so the mean is always well defined.
pub fn log_likelihood(
    densities: &[PiecewiseDensity],
    targets: &[f64],
) -> Result<ScoreReport, EvaluationError> {
    if densities.len() != targets.len() {
        return Err(EvaluationError::LengthMismatch {
            expected: densities.len(),
            got: targets.len(),
        });
    }
    let scored = map_indexed(targets.len(), |i| {
        let (d, floored) = densities[i].lookup(targets[i]);
        (d.ln(), floored)
    });
    let per_instance: Vec<f64> = scored.iter().map(|&(l, _)| l).collect();
    let n_floored = scored.iter().filter(|&&(_, f)| f).count();
    let mean = if per_instance.is_empty() {
        0.0
    } else {
        per_instance.iter().sum::<f64>() / per_instance.len() as f64
    };
    Ok(ScoreReport {
        mean_log_likelihood: mean,
        per_instance_log_densities: per_instance,
        n_floored,
    })
}

/// One bin of a reliability diagram. Coordinates are present exactly
/// when the bin is occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBin {
    pub count: usize,
    pub mean_predicted: Option<f64>,
    pub empirical_frequency: Option<f64>,
}

/// Reliability data for one threshold's binary event.
#[derive(Debug, Clone)]
pub struct ReliabilityLine {
    pub threshold: f64,
    pub bins: Vec<ReliabilityBin>,
}

/// Index of the right-closed equal-width bin containing `p`: bin i
/// covers (i/B, (i+1)/B], with 0 folded into the first bin.
fn bin_index(p: f64, n_bins: usize) -> usize {
    if p <= 0.0 {
        return 0;
    }
    let idx = (p * n_bins as f64).ceil() as usize;
    idx.saturating_sub(1).min(n_bins - 1)
}

/// Group predicted probabilities for the event Y <= threshold into
/// equal-width bins and compare the mean prediction with the empirical
/// positive rate per bin. Empty bins are kept (count 0, no coordinates)
/// so downstream plots see the full axis.
pub fn reliability_line(
    threshold: f64,
    predicted: &[f64],
    outcomes: &[bool],
    n_bins: usize,
) -> Result<ReliabilityLine, EvaluationError> {
    assert!(n_bins >= 1);
    if predicted.len() != outcomes.len() {
        return Err(EvaluationError::LengthMismatch {
            expected: predicted.len(),
            got: outcomes.len(),
        });
    }
    let mut count = vec![0usize; n_bins];
    let mut pred_sum = vec![0.0; n_bins];
    let mut pos = vec![0usize; n_bins];
    for (&p, &y) in predicted.iter().zip(outcomes) {
        let b = bin_index(p, n_bins);
        count[b] += 1;
        pred_sum[b] += p;
        pos[b] += y as usize;
    }
    let bins = (0..n_bins)
        .map(|b| ReliabilityBin {
            count: count[b],
            mean_predicted: (count[b] > 0).then(|| pred_sum[b] / count[b] as f64),
            empirical_frequency: (count[b] > 0).then(|| pos[b] as f64 / count[b] as f64),
        })
        .collect();
    Ok(ReliabilityLine { threshold, bins })
}

/// Count-weighted mean absolute gap between predicted and empirical
/// frequencies over all occupied bins of all lines; zero for perfectly
/// diagonal diagrams.
pub fn calibration_deviation(lines: &[ReliabilityLine]) -> f64 {
    let mut weighted = 0.0;
    let mut total = 0usize;
    for line in lines {
        for bin in &line.bins {
            if let (Some(mp), Some(ef)) = (bin.mean_predicted, bin.empirical_frequency) {
                weighted += bin.count as f64 * (mp - ef).abs();
                total += bin.count;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        weighted / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{CdfGrid, GaussianPredictive, ThresholdGrid, DENSITY_FLOOR};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    #[test]
    fn standard_normal_log_density_at_zero() {
        let grid = Arc::new(ThresholdGrid::from_range(-4.0, 4.0, 801).unwrap());
        let density =
            PiecewiseDensity::from_cdf(&GaussianPredictive::new(0.0, 1.0).cdf_grid(&grid));
        let report = log_likelihood(&[density], &[0.0]).unwrap();
        let analytic = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((report.mean_log_likelihood - analytic).abs() < 2e-3);
        assert_eq!(report.n_floored, 0);
    }

    #[test]
    fn uniform_density_scores_log_quarter() {
        let grid = Arc::new(
            ThresholdGrid::from_thresholds(vec![0.0, 1.0, 2.0, 3.0, 4.0], 0.0, 4.0).unwrap(),
        );
        let cdf = CdfGrid::new(Arc::clone(&grid), vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let density = PiecewiseDensity::from_cdf(&cdf);
        let report = log_likelihood(
            &[density.clone(), density.clone(), density],
            &[0.5, 2.5, 3.9],
        )
        .unwrap();
        for l in &report.per_instance_log_densities {
            assert_relative_eq!(*l, 0.25f64.ln(), epsilon = 1e-7);
        }
        assert_relative_eq!(
            report.mean_log_likelihood,
            report.per_instance_log_densities.iter().sum::<f64>() / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn floored_region_scores_the_floor_and_is_counted() {
        // Middle segment (1, 2] carries no mass; its width is one, so the
        // floored density is exactly the floor.
        let grid =
            Arc::new(ThresholdGrid::from_thresholds(vec![0.0, 1.0, 2.0], 0.0, 2.0).unwrap());
        let cdf = CdfGrid::new(Arc::clone(&grid), vec![0.0, 0.5, 0.5]).unwrap();
        let density = PiecewiseDensity::from_cdf(&cdf);
        let report = log_likelihood(&[density], &[1.5]).unwrap();
        assert_relative_eq!(
            report.per_instance_log_densities[0],
            DENSITY_FLOOR.ln(),
            epsilon = 1e-9
        );
        assert_eq!(report.n_floored, 1);
        assert!(report.mean_log_likelihood.is_finite());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(
            log_likelihood(&[], &[1.0]),
            Err(EvaluationError::LengthMismatch { .. })
        ));
        assert!(matches!(
            reliability_line(0.0, &[0.5], &[], 8),
            Err(EvaluationError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn constant_predictions_occupy_one_central_bin() {
        let predicted = vec![0.5; 100];
        let outcomes: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let line = reliability_line(1.0, &predicted, &outcomes, 8).unwrap();
        let occupied: Vec<usize> = (0..8).filter(|&b| line.bins[b].count > 0).collect();
        assert_eq!(occupied, vec![3]); // 0.5 lands in (0.375, 0.5]
        let bin = &line.bins[3];
        assert_eq!(bin.count, 100);
        assert_relative_eq!(bin.mean_predicted.unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(bin.empirical_frequency.unwrap(), 0.5, epsilon = 1e-12);
        for b in [0, 1, 2, 4, 5, 6, 7] {
            assert_eq!(line.bins[b].count, 0);
            assert!(line.bins[b].mean_predicted.is_none());
            assert!(line.bins[b].empirical_frequency.is_none());
        }
    }

    #[test]
    fn sharp_predictions_hit_the_corners() {
        let outcomes: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let predicted: Vec<f64> = outcomes.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
        let line = reliability_line(0.0, &predicted, &outcomes, 8).unwrap();
        assert_eq!(line.bins[0].empirical_frequency, Some(0.0));
        assert_eq!(line.bins[0].mean_predicted, Some(0.0));
        assert_eq!(line.bins[7].empirical_frequency, Some(1.0));
        assert_eq!(line.bins[7].mean_predicted, Some(1.0));
        assert_eq!(
            line.bins.iter().map(|b| b.count).sum::<usize>(),
            outcomes.len()
        );
        assert_eq!(calibration_deviation(&[line]), 0.0);
    }

    #[test]
    fn well_calibrated_simulation_sits_on_the_diagonal() {
        // Predictions uniform on (0,1), outcomes drawn with exactly the
        // predicted probability: within each bin the conditional positive
        // rate equals the mean prediction, so every occupied bin should
        // sit within binomial noise (~4 sigma = 0.018 at n ~ 12.5k) of
        // the diagonal.
        let mut rng = crate::numerics::seeded_rng(55);
        let n = 100_000;
        let predicted: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let outcomes: Vec<bool> = predicted
            .iter()
            .map(|&p| rng.random_range(0.0..1.0) < p)
            .collect();
        let line = reliability_line(0.0, &predicted, &outcomes, 8).unwrap();
        for bin in &line.bins {
            assert!(bin.count > 0);
            let gap = (bin.mean_predicted.unwrap() - bin.empirical_frequency.unwrap()).abs();
            assert!(gap < 0.02, "bin gap {gap}");
        }
        assert!(calibration_deviation(&[line]) < 0.03);
    }

    #[test]
    fn deviation_formula_hand_case() {
        let line = ReliabilityLine {
            threshold: 0.0,
            bins: vec![
                ReliabilityBin {
                    count: 10,
                    mean_predicted: Some(0.5),
                    empirical_frequency: Some(0.9),
                },
                ReliabilityBin {
                    count: 0,
                    mean_predicted: None,
                    empirical_frequency: None,
                },
            ],
        };
        assert_relative_eq!(calibration_deviation(&[line]), 0.4, epsilon = 1e-12);
        assert_eq!(calibration_deviation(&[]), 0.0);
    }

    #[test]
    fn deviation_weights_by_count_across_lines() {
        let mk = |count, mp: f64, ef: f64| ReliabilityLine {
            threshold: 0.0,
            bins: vec![ReliabilityBin {
                count,
                mean_predicted: Some(mp),
                empirical_frequency: Some(ef),
            }],
        };
        // 30 instances at gap 0.1, 10 at gap 0.5 -> (30*0.1 + 10*0.5)/40.
        let d = calibration_deviation(&[mk(30, 0.4, 0.5), mk(10, 0.0, 0.5)]);
        assert_relative_eq!(d, 0.2, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn bins_partition_the_predictions(
            preds in proptest::collection::vec(0.0f64..=1.0, 1..200),
            n_bins in 1usize..12,
            flip in any::<u64>(),
        ) {
            let outcomes: Vec<bool> = preds
                .iter()
                .enumerate()
                .map(|(i, _)| (i as u64 ^ flip) % 3 == 0)
                .collect();
            let line = reliability_line(0.0, &preds, &outcomes, n_bins).unwrap();
            prop_assert_eq!(line.bins.len(), n_bins);
            prop_assert_eq!(
                line.bins.iter().map(|b| b.count).sum::<usize>(),
                preds.len()
            );
            for bin in &line.bins {
                prop_assert_eq!(bin.count > 0, bin.mean_predicted.is_some());
                if let (Some(mp), Some(ef)) = (bin.mean_predicted, bin.empirical_frequency) {
                    prop_assert!((0.0..=1.0).contains(&mp));
                    prop_assert!((0.0..=1.0).contains(&ef));
                }
            }
        }

        #[test]
        fn deviation_is_permutation_invariant(
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numerics::seeded_rng(seed);
            let n = 200;
            let mut pairs: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    let p: f64 = rng.random_range(0.0..1.0);
                    (p, rng.random_range(0.0..1.0) < p)
                })
                .collect();
            let line = |pairs: &[(f64, bool)]| {
                let (p, y): (Vec<f64>, Vec<bool>) = pairs.iter().copied().unzip();
                reliability_line(0.0, &p, &y, 8).unwrap()
            };
            let before = calibration_deviation(&[line(&pairs)]);
            use rand::seq::SliceRandom;
            pairs.shuffle(&mut rng);
            let after = calibration_deviation(&[line(&pairs)]);
            prop_assert!((before - after).abs() < 1e-12);
        }
    }
}
