//! Experimental protocol: repeated k-fold cross-validation with a
//! three-way calibration split inside each training fold.
//!
//! Per fold: standardize on the training fold, build the threshold grid
//! from its target range, then rotate three sub-folds — base model on
//! two thirds, calibrator on the held-out third — and average the three
//! calibrated densities into one prediction per test instance. The
//! uncalibrated baseline (`method = none`) fits the base model on the
//! whole training fold and is scored analytically.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::base_models::{fit_brr, fit_gpr, fit_ols, BaseModel};
use crate::data::{builtin_registry, generate_toy, load_registered, Dataset, ToyParams};
use crate::distributions::{
    monotone_project, CdfGrid, PiecewiseDensity, ThresholdGrid, DENSITY_FLOOR,
};
use crate::empirical_calibration::{empirical_density, fit_empirical, EmpiricalKind};
use crate::evaluation::{
    calibration_deviation, log_likelihood, reliability_line, ReliabilityLine,
    DEFAULT_RELIABILITY_BINS,
};
use crate::gpc_calibration::{
    build_gpc_training, fit_gpc, predict_gpc_density, GpcModel, DEFAULT_TRAINING_CAP,
};
use crate::numerics::derived_rng;
use crate::parallel::map_indexed;

const GPC_RESTARTS: usize = 2;
const GPC_ASCENT_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseModelKind {
    Ols,
    Brr,
    Gpr,
}

impl fmt::Display for BaseModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseModelKind::Ols => "ols",
            BaseModelKind::Brr => "brr",
            BaseModelKind::Gpr => "gpr",
        })
    }
}

impl FromStr for BaseModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ols" => Ok(BaseModelKind::Ols),
            "brr" => Ok(BaseModelKind::Brr),
            "gpr" => Ok(BaseModelKind::Gpr),
            other => Err(format!("unknown base model {other:?} (ols|brr|gpr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    None,
    ELogistic,
    EBeta,
    Gpc,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::None => "none",
            MethodKind::ELogistic => "e-logistic",
            MethodKind::EBeta => "e-beta",
            MethodKind::Gpc => "gpc",
        })
    }
}

impl FromStr for MethodKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(MethodKind::None),
            "e-logistic" => Ok(MethodKind::ELogistic),
            "e-beta" => Ok(MethodKind::EBeta),
            "gpc" => Ok(MethodKind::Gpc),
            other => Err(format!(
                "unknown method {other:?} (none|e-logistic|e-beta|gpc)"
            )),
        }
    }
}

/// How the three calibrated models are combined. Averaging densities
/// and averaging distribution functions coincide on a shared grid; the
/// switch is kept because the protocol leaves the reading open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    Density,
    Cdf,
}

impl fmt::Display for EnsembleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnsembleMode::Density => "density",
            EnsembleMode::Cdf => "cdf",
        })
    }
}

impl FromStr for EnsembleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "density" => Ok(EnsembleMode::Density),
            "cdf" => Ok(EnsembleMode::Cdf),
            other => Err(format!("unknown ensemble mode {other:?} (density|cdf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub base_model: BaseModelKind,
    pub method: MethodKind,
    /// Thresholds of the calibration grid (K).
    pub train_thresholds: usize,
    /// Thresholds of the finer grid the GP classifier predicts on.
    pub predict_thresholds: usize,
    pub repeats: usize,
    pub folds: usize,
    pub seed: u64,
    /// Subsampling cap on pooled GPC training pairs.
    pub gpc_cap: usize,
    pub ensemble: EnsembleMode,
    /// Bin count for the per-threshold reliability lines.
    pub reliability_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "toy".into(),
            base_model: BaseModelKind::Ols,
            method: MethodKind::None,
            train_thresholds: 16,
            predict_thresholds: 256,
            repeats: 1,
            folds: 5,
            seed: 7,
            gpc_cap: DEFAULT_TRAINING_CAP,
            ensemble: EnsembleMode::Density,
            reliability_bins: DEFAULT_RELIABILITY_BINS,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::InvalidConfig(m.into()));
        if self.folds < 2 {
            return fail("folds must be at least 2");
        }
        if self.repeats < 1 {
            return fail("repeats must be at least 1");
        }
        if self.train_thresholds < 2 {
            return fail("train_thresholds must be at least 2");
        }
        if self.predict_thresholds < self.train_thresholds {
            return fail("predict_thresholds must be >= train_thresholds");
        }
        if self.gpc_cap < 1 {
            return fail("gpc_cap must be at least 1");
        }
        if self.reliability_bins < 1 {
            return fail("reliability_bins must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{n} instances cannot fill {folds} folds")]
    TooFewInstances { n: usize, folds: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("repeat {repeat_index} fold {fold_index}: {message}")]
    FoldFailed {
        repeat_index: usize,
        fold_index: usize,
        message: String,
    },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub repeat_index: usize,
    pub fold_index: usize,
    pub mean_log_likelihood: f64,
    pub n_test: usize,
    pub calibration_deviation: f64,
    pub wall_time_seconds: f64,
    /// One line per training threshold, in grid order.
    pub reliability: Vec<ReliabilityLine>,
}

/// A fold that errored; the run carries on without it.
#[derive(Debug, Clone)]
pub struct FoldFailure {
    pub repeat_index: usize,
    pub fold_index: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct AggregateSummary {
    /// Mean over fold mean-log-likelihoods.
    pub mean_log_likelihood: f64,
    /// Sample standard deviation of the fold means (0 for one fold).
    pub std_log_likelihood: f64,
    pub mean_calibration_deviation: f64,
    pub n_folds: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub fold_results: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
    pub aggregate: Option<AggregateSummary>,
}

/// Deterministic repeated k-fold assignments: result[repeat][fold] is a
/// test-index set. Each repeat shuffles independently under a stream
/// derived from the seed; fold sizes differ by at most one.
pub fn split_cv(
    n: usize,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<usize>>>, HarnessError> {
    if n < folds {
        return Err(HarnessError::TooFewInstances { n, folds });
    }
    let mut out = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut derived_rng(seed, &[r as u64]));
        let base = n / folds;
        let extra = n % folds;
        let mut cursor = 0;
        let mut folds_vec = Vec::with_capacity(folds);
        for f in 0..folds {
            let size = base + usize::from(f < extra);
            folds_vec.push(idx[cursor..cursor + size].to_vec());
            cursor += size;
        }
        out.push(folds_vec);
    }
    Ok(out)
}

/// Rotate positions 0..n into three near-equal parts.
pub(crate) fn three_way_split(n: usize, rng: &mut crate::numerics::SeedRng) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let base = n / 3;
    let extra = n % 3;
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut cursor = 0;
    for (s, part) in parts.iter_mut().enumerate() {
        let size = base + usize::from(s < extra);
        *part = idx[cursor..cursor + size].to_vec();
        cursor += size;
    }
    parts
}

/// Combine the three calibrated densities (equal weights). Both modes
/// route through the canonical mass constructor, so the result always
/// carries unit mass.
pub(crate) fn ensemble_densities(
    parts: &[PiecewiseDensity],
    mode: EnsembleMode,
) -> Result<PiecewiseDensity, String> {
    match mode {
        EnsembleMode::Density => {
            let refs: Vec<&PiecewiseDensity> = parts.iter().collect();
            PiecewiseDensity::average(&refs).map_err(|e| e.to_string())
        }
        EnsembleMode::Cdf => {
            let first = parts.first().ok_or("no densities to combine")?;
            let grid = first.grid();
            let mut avg = vec![0.0; grid.len()];
            for p in parts {
                if p.grid().thresholds() != grid.thresholds() {
                    return Err("densities on different grids".into());
                }
                for (a, v) in avg.iter_mut().zip(p.cdf_values()) {
                    *a += v;
                }
            }
            for a in avg.iter_mut() {
                *a /= parts.len() as f64;
            }
            monotone_project(&mut avg, 0.0, 1.0);
            let cdf = CdfGrid::new(Arc::clone(grid), avg).map_err(|e| e.to_string())?;
            Ok(PiecewiseDensity::from_cdf(&cdf))
        }
    }
}

fn fit_base(
    kind: BaseModelKind,
    x: &[Vec<f64>],
    y: &[f64],
) -> Result<Box<dyn BaseModel>, String> {
    let model: Box<dyn BaseModel> = match kind {
        BaseModelKind::Ols => Box::new(fit_ols(x, y).map_err(|e| e.to_string())?),
        BaseModelKind::Brr => Box::new(fit_brr(x, y, 300, 1e-6).map_err(|e| e.to_string())?),
        BaseModelKind::Gpr => Box::new(fit_gpr(x, y, 3).map_err(|e| e.to_string())?),
    };
    Ok(model)
}

/// Index of the raw feature with the largest variance (the single
/// feature kept for GPR bases on multi-feature data).
fn max_variance_feature(features: &[Vec<f64>]) -> usize {
    let d = features[0].len();
    let n = features.len() as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for j in 0..d {
        let mean = features.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = features.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        if var > best.1 {
            best = (j, var);
        }
    }
    best.0
}

fn select_column(rows: &[Vec<f64>], j: usize) -> Vec<Vec<f64>> {
    rows.iter().map(|r| vec![r[j]]).collect()
}

struct CalibratedModels {
    bases: Vec<Box<dyn BaseModel>>,
    empiricals: Vec<crate::empirical_calibration::EmpiricalCalibrator>,
    gpcs: Vec<GpcModel>,
}

/// Run one (repeat, fold) evaluation. `fold_id` tags errors and seeds
/// the fold-local random stream.
pub fn run_fold(
    config: &ExperimentConfig,
    fold_id: (usize, usize),
    train_indices: &[usize],
    test_indices: &[usize],
    dataset: &Dataset,
) -> Result<FoldResult, HarnessError> {
    let start = Instant::now();
    let (repeat_index, fold_index) = fold_id;
    let tag = |message: String| HarnessError::FoldFailed {
        repeat_index,
        fold_index,
        message,
    };

    let gather = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| dataset.features[i].clone()).collect(),
            idx.iter().map(|&i| dataset.targets[i]).collect(),
        )
    };
    let (mut train_x, train_y) = gather(train_indices);
    let (mut test_x, test_y) = gather(test_indices);
    if train_y.is_empty() || test_y.is_empty() {
        return Err(tag("empty train or test fold".into()));
    }

    // GPR scales cubically; on multi-feature tables it runs on the single
    // most dispersed raw feature.
    if config.base_model == BaseModelKind::Gpr && train_x[0].len() > 1 {
        let j = max_variance_feature(&train_x);
        train_x = select_column(&train_x, j);
        test_x = select_column(&test_x, j);
    }

    let standardizer = crate::data::fit_standardizer(&train_x, &train_y);
    let tx = standardizer.transform_features(&train_x);
    let ty = standardizer.transform_targets(&train_y);
    let sx = standardizer.transform_features(&test_x);
    let sy = standardizer.transform_targets(&test_y);
    let adjustment = standardizer.log_density_adjustment();

    let y_min = ty.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = ty.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid = Arc::new(
        ThresholdGrid::from_range(y_min, y_max, config.train_thresholds)
            .map_err(|e| tag(e.to_string()))?,
    );

    let (mean_ll, lines) = if config.method == MethodKind::None {
        let base = fit_base(config.base_model, &tx, &ty).map_err(&tag)?;
        let preds = sx
            .iter()
            .map(|x| base.predict(x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| tag(e.to_string()))?;
        let mean = preds
            .iter()
            .zip(&sy)
            .map(|(g, &y)| g.log_pdf(y).exp().max(DENSITY_FLOOR).ln())
            .sum::<f64>()
            / sy.len() as f64;
        let lines: Vec<ReliabilityLine> = grid
            .thresholds()
            .iter()
            .map(|&t| {
                let predicted: Vec<f64> = preds.iter().map(|g| g.cdf(t)).collect();
                let outcomes: Vec<bool> = sy.iter().map(|&y| y <= t).collect();
                reliability_line(t, &predicted, &outcomes, config.reliability_bins)
                    .expect("equal lengths by construction")
            })
            .collect();
        (mean + adjustment, lines)
    } else {
        let mut rng = derived_rng(config.seed, &[repeat_index as u64, fold_index as u64]);
        let parts = three_way_split(ty.len(), &mut rng);
        let mut models = CalibratedModels {
            bases: Vec::new(),
            empiricals: Vec::new(),
            gpcs: Vec::new(),
        };
        for s in 0..3 {
            let cal_pos = &parts[s];
            let base_pos: Vec<usize> = (0..3)
                .filter(|&o| o != s)
                .flat_map(|o| parts[o].iter().copied())
                .collect();
            let bx: Vec<Vec<f64>> = base_pos.iter().map(|&i| tx[i].clone()).collect();
            let by: Vec<f64> = base_pos.iter().map(|&i| ty[i]).collect();
            let base = fit_base(config.base_model, &bx, &by).map_err(&tag)?;
            let cal_cdfs: Vec<CdfGrid> = cal_pos
                .iter()
                .map(|&i| base.predict(&tx[i]).map(|g| g.cdf_grid(&grid)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| tag(e.to_string()))?;
            let cal_y: Vec<f64> = cal_pos.iter().map(|&i| ty[i]).collect();
            match config.method {
                MethodKind::ELogistic | MethodKind::EBeta => {
                    let kind = if config.method == MethodKind::ELogistic {
                        EmpiricalKind::Logistic
                    } else {
                        EmpiricalKind::Beta
                    };
                    let cal = fit_empirical(kind, &grid, &cal_cdfs, &cal_y)
                        .map_err(|e| tag(e.to_string()))?;
                    models.empiricals.push(cal);
                }
                MethodKind::Gpc => {
                    let gpc_seed = rng.random::<u64>();
                    let set =
                        build_gpc_training(&cal_cdfs, &cal_y, &grid, config.gpc_cap, gpc_seed)
                            .map_err(|e| tag(e.to_string()))?;
                    models.gpcs.push(fit_gpc(set, GPC_RESTARTS, GPC_ASCENT_TOL));
                }
                _ => unreachable!(),
            }
            models.bases.push(base);
        }

        let predict_grid = if config.method == MethodKind::Gpc {
            Arc::new(
                ThresholdGrid::from_range(y_min, y_max, config.predict_thresholds)
                    .map_err(|e| tag(e.to_string()))?,
            )
        } else {
            Arc::clone(&grid)
        };

        let ensembles = map_indexed(sy.len(), |i| -> Result<PiecewiseDensity, String> {
            let mut parts_i = Vec::with_capacity(3);
            for s in 0..3 {
                let gauss = models.bases[s]
                    .predict(&sx[i])
                    .map_err(|e| e.to_string())?;
                let density = match config.method {
                    MethodKind::Gpc => {
                        let q = gauss.cdf_grid(&predict_grid);
                        predict_gpc_density(&models.gpcs[s], &q)
                    }
                    _ => {
                        let q = gauss.cdf_grid(&grid);
                        empirical_density(&models.empiricals[s], &q)
                            .map_err(|e| e.to_string())?
                    }
                };
                parts_i.push(density);
            }
            ensemble_densities(&parts_i, config.ensemble)
        });
        let ensembles: Vec<PiecewiseDensity> = ensembles
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(&tag)?;

        let report = log_likelihood(&ensembles, &sy).expect("one density per target");
        // Reliability at the calibration thresholds, read off the final
        // ensemble's distribution function.
        let lines: Vec<ReliabilityLine> = grid
            .thresholds()
            .iter()
            .map(|&t| {
                let predicted: Vec<f64> = ensembles.iter().map(|d| d.cdf_at(t)).collect();
                let outcomes: Vec<bool> = sy.iter().map(|&y| y <= t).collect();
                reliability_line(t, &predicted, &outcomes, config.reliability_bins)
                    .expect("equal lengths by construction")
            })
            .collect();
        (report.mean_log_likelihood + adjustment, lines)
    };

    Ok(FoldResult {
        repeat_index,
        fold_index,
        mean_log_likelihood: mean_ll,
        n_test: sy.len(),
        calibration_deviation: calibration_deviation(&lines),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        reliability: lines,
    })
}

/// Materialize the dataset a config names: "toy" generates the synthetic
/// mixture under the experiment seed, anything else resolves through the
/// built-in registry (honoring the data-directory environment variable).
pub fn resolve_dataset(config: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    if config.dataset == "toy" {
        Ok(generate_toy(&ToyParams {
            seed: config.seed,
            ..ToyParams::default()
        }))
    } else {
        Ok(load_registered(
            &config.dataset,
            &builtin_registry(),
            None,
        )?)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let dataset = resolve_dataset(config)?;
    run_experiment_on(config, &dataset)
}

/// All (repeat, fold) evaluations for one config on an already-loaded
/// dataset. Failed folds are collected, not fatal; results are
/// deterministic in (config, dataset) because every random choice flows
/// from per-fold derived streams.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    dataset: &Dataset,
) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let split = split_cv(dataset.len(), config.folds, config.repeats, config.seed)?;
    let units: Vec<(usize, usize)> = (0..config.repeats)
        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
        .collect();

    let outcomes = map_indexed(units.len(), |u| {
        let (r, f) = units[u];
        let test = &split[r][f];
        let train: Vec<usize> = (0..config.folds)
            .filter(|&o| o != f)
            .flat_map(|o| split[r][o].iter().copied())
            .collect();
        run_fold(config, (r, f), &train, test, dataset)
    });

    let mut fold_results = Vec::new();
    let mut failures = Vec::new();
    for ((r, f), outcome) in units.into_iter().zip(outcomes) {
        match outcome {
            Ok(res) => fold_results.push(res),
            Err(e) => failures.push(FoldFailure {
                repeat_index: r,
                fold_index: f,
                message: e.to_string(),
            }),
        }
    }

    let aggregate = if fold_results.is_empty() {
        None
    } else {
        let n = fold_results.len();
        let mean = fold_results
            .iter()
            .map(|r| r.mean_log_likelihood)
            .sum::<f64>()
            / n as f64;
        let var = if n > 1 {
            fold_results
                .iter()
                .map(|r| {
                    let d = r.mean_log_likelihood - mean;
                    d * d
                })
                .sum::<f64>()
                / (n - 1) as f64
        } else {
            0.0
        };
        let mean_dev = fold_results
            .iter()
            .map(|r| r.calibration_deviation)
            .sum::<f64>()
            / n as f64;
        Some(AggregateSummary {
            mean_log_likelihood: mean,
            std_log_likelihood: var.sqrt(),
            mean_calibration_deviation: mean_dev,
            n_folds: n,
        })
    };

    Ok(ExperimentOutcome {
        fold_results,
        failures,
        aggregate,
    })
}
