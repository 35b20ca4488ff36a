//! Everything the `regcal` binary does that is worth testing without a
//! subprocess: config-file handling, result serialization, and
//! cross-fold reliability pooling.

use std::collections::BTreeMap;

use regcal::data::DataError;
use regcal::evaluation::ReliabilityLine;
use regcal::harness::{ExperimentConfig, ExperimentOutcome, FoldResult, HarnessError};

/// Exit codes promised by the interface: 0 success, 1 usage or config
/// error, 2 partial fold failure, 3 IO failure.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub struct CliFailure {
    pub code: i32,
    pub message: String,
}

impl CliFailure {
    pub fn usage(message: impl Into<String>) -> CliFailure {
        CliFailure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> CliFailure {
        CliFailure {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

/// Harness and loader errors split into "you asked for something
/// inconsistent" versus "the filesystem let us down".
pub fn failure_from(err: HarnessError) -> CliFailure {
    let code = match &err {
        HarnessError::Data(DataError::FileNotFound(_)) | HarnessError::Data(DataError::Csv(_)) => {
            EXIT_IO
        }
        _ => EXIT_USAGE,
    };
    CliFailure {
        code,
        message: err.to_string(),
    }
}

/// The flat `key = value` experiment-config format. Keys mirror the
/// config struct's field names; unknown keys and duplicate keys are
/// rejected so typos fail loudly instead of silently running defaults.
pub fn apply_config_text(config: &mut ExperimentConfig, text: &str) -> Result<(), String> {
    let mut seen: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|s| s == key) {
            return Err(format!("line {}: duplicate key {key:?}", lineno + 1));
        }
        seen.push(key.to_string());
        let bad = |what: &str| format!("line {}: {key} = {value:?} is not {what}", lineno + 1);
        match key {
            "dataset" => config.dataset = value.to_string(),
            "base_model" => config.base_model = value.parse().map_err(|e: String| e)?,
            "method" => config.method = value.parse().map_err(|e: String| e)?,
            "train_thresholds" => {
                config.train_thresholds = value.parse().map_err(|_| bad("a count"))?
            }
            "predict_thresholds" => {
                config.predict_thresholds = value.parse().map_err(|_| bad("a count"))?
            }
            "repeats" => config.repeats = value.parse().map_err(|_| bad("a count"))?,
            "folds" => config.folds = value.parse().map_err(|_| bad("a count"))?,
            "seed" => config.seed = value.parse().map_err(|_| bad("an integer seed"))?,
            "gpc_cap" => config.gpc_cap = value.parse().map_err(|_| bad("a count"))?,
            "ensemble" => config.ensemble = value.parse().map_err(|e: String| e)?,
            "reliability_bins" => {
                config.reliability_bins = value.parse().map_err(|_| bad("a count"))?
            }
            other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
        }
    }
    Ok(())
}

/// Canonical echo of a resolved config; feeding it back through
/// [`apply_config_text`] reproduces the config exactly.
pub fn config_to_text(config: &ExperimentConfig) -> String {
    config_pairs(config)
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

pub fn config_pairs(config: &ExperimentConfig) -> Vec<(&'static str, String)> {
    vec![
        ("dataset", config.dataset.clone()),
        ("base_model", config.base_model.to_string()),
        ("method", config.method.to_string()),
        ("train_thresholds", config.train_thresholds.to_string()),
        ("predict_thresholds", config.predict_thresholds.to_string()),
        ("repeats", config.repeats.to_string()),
        ("folds", config.folds.to_string()),
        ("seed", config.seed.to_string()),
        ("gpc_cap", config.gpc_cap.to_string()),
        ("ensemble", config.ensemble.to_string()),
        ("reliability_bins", config.reliability_bins.to_string()),
    ]
}

/// One emitted results row. `results.csv` column order is part of the
/// interface: repeat, fold, method, base, k_train, mean_log_likelihood,
/// calibration_deviation, wall_time_seconds.
pub const RESULTS_HEADER: &str =
    "repeat,fold,method,base,k_train,mean_log_likelihood,calibration_deviation,wall_time_seconds";

pub fn results_csv(runs: &[(ExperimentConfig, ExperimentOutcome)]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for (config, outcome) in runs {
        let mut rows: Vec<&FoldResult> = outcome.fold_results.iter().collect();
        rows.sort_by_key(|r| (r.repeat_index, r.fold_index));
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.repeat_index,
                r.fold_index,
                config.method,
                config.base_model,
                config.train_thresholds,
                r.mean_log_likelihood,
                r.calibration_deviation,
                r.wall_time_seconds,
            ));
        }
    }
    out
}

pub fn summary_json(runs: &[(ExperimentConfig, ExperimentOutcome)]) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = runs
        .iter()
        .map(|(config, outcome)| {
            let agg = outcome.aggregate.as_ref();
            serde_json::json!({
                "method": config.method.to_string(),
                "base": config.base_model.to_string(),
                "k_train": config.train_thresholds,
                "mean_log_likelihood": agg.map(|a| a.mean_log_likelihood),
                "std_log_likelihood": agg.map(|a| a.std_log_likelihood),
                "mean_calibration_deviation": agg.map(|a| a.mean_calibration_deviation),
                "n_folds": outcome.fold_results.len(),
                "n_failures": outcome.failures.len(),
            })
        })
        .collect();
    serde_json::json!({ "schema": "regcal-summary-v1", "rows": rows })
}

pub fn manifest_json(
    config: &ExperimentConfig,
    started_unix_seconds: u64,
    outputs: &[String],
    runs: &[(ExperimentConfig, ExperimentOutcome)],
) -> serde_json::Value {
    let snapshot: BTreeMap<&str, String> = config_pairs(config).into_iter().collect();
    let mut folds: Vec<serde_json::Value> = Vec::new();
    for (run_config, outcome) in runs {
        for r in &outcome.fold_results {
            folds.push(serde_json::json!({
                "method": run_config.method.to_string(),
                "k_train": run_config.train_thresholds,
                "repeat": r.repeat_index,
                "fold": r.fold_index,
                "status": "ok",
            }));
        }
        for f in &outcome.failures {
            folds.push(serde_json::json!({
                "method": run_config.method.to_string(),
                "k_train": run_config.train_thresholds,
                "repeat": f.repeat_index,
                "fold": f.fold_index,
                "status": "failed",
                "message": f.message,
            }));
        }
    }
    serde_json::json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "started_unix_seconds": started_unix_seconds,
        "config": snapshot,
        "outputs": outputs,
        "folds": folds,
    })
}

/// One row of the long-format reliability file.
#[derive(Debug, PartialEq)]
pub struct PooledBin {
    pub threshold: f64,
    pub bin: usize,
    pub mean_predicted: f64,
    pub empirical_frequency: f64,
    pub count: usize,
}

/// Merge per-fold reliability lines across folds, by threshold index.
/// Thresholds differ slightly per fold (each fold's grid comes from its
/// own training range), so the pooled line reports their mean; bins
/// merge count-weighted, and bins that stay empty everywhere are
/// dropped.
pub fn pool_reliability(folds: &[FoldResult]) -> Vec<PooledBin> {
    let n_lines = folds.iter().map(|f| f.reliability.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for line_index in 0..n_lines {
        let lines: Vec<&ReliabilityLine> = folds
            .iter()
            .filter_map(|f| f.reliability.get(line_index))
            .collect();
        if lines.is_empty() {
            continue;
        }
        let threshold = lines.iter().map(|l| l.threshold).sum::<f64>() / lines.len() as f64;
        let n_bins = lines.iter().map(|l| l.bins.len()).max().unwrap();
        for bin in 0..n_bins {
            let mut count = 0usize;
            let mut predicted = 0.0;
            let mut frequency = 0.0;
            for line in &lines {
                let Some(b) = line.bins.get(bin) else { continue };
                if b.count == 0 {
                    continue;
                }
                count += b.count;
                predicted += b.mean_predicted.unwrap() * b.count as f64;
                frequency += b.empirical_frequency.unwrap() * b.count as f64;
            }
            if count == 0 {
                continue;
            }
            out.push(PooledBin {
                threshold,
                bin,
                mean_predicted: predicted / count as f64,
                empirical_frequency: frequency / count as f64,
                count,
            });
        }
    }
    out
}

pub const RELIABILITY_HEADER: &str =
    "method,threshold,bin,mean_predicted,empirical_frequency,count";

pub fn reliability_csv(method: &str, pooled: &[PooledBin]) -> String {
    let mut out = String::from(RELIABILITY_HEADER);
    out.push('\n');
    for row in pooled {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            method, row.threshold, row.bin, row.mean_predicted, row.empirical_frequency, row.count,
        ));
    }
    out
}
