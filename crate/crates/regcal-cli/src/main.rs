//! `regcal` — benchmark CLI over the calibration library: toy-data
//! generation, cross-validated experiment runs, threshold sweeps, and
//! reliability-diagram export. Emits tidy CSV/JSON for any plotting
//! tool rather than rendering figures itself.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use regcal::data::{generate_toy, load_csv, ColumnSelector, Dataset, ToyParams};
use regcal::harness::{
    run_experiment, run_experiment_on, ExperimentConfig, ExperimentOutcome, MethodKind,
};
use regcal_cli::{
    apply_config_text, config_to_text, failure_from, manifest_json, pool_reliability,
    reliability_csv, results_csv, summary_json, CliFailure, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE,
};

#[derive(Parser)]
#[command(
    name = "regcal",
    version,
    about = "Calibrated probabilistic regression benchmark runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic two-component toy dataset as CSV.
    GenerateToy(GenerateToyArgs),
    /// Run one cross-validated experiment and emit result files.
    Run(RunArgs),
    /// Repeat an experiment across several training-grid sizes.
    Sweep(SweepArgs),
    /// Export pooled reliability-diagram data for one experiment.
    Reliability(ReliabilityArgs),
}

#[derive(Args)]
struct GenerateToyArgs {
    /// Number of instances.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Slope of the linear mixture component.
    #[arg(long, default_value_t = 2.0)]
    slope: f64,
    /// Level of the flat mixture component.
    #[arg(long, default_value_t = 1.0)]
    flat_level: f64,
    /// Observation noise; must be positive.
    #[arg(long, default_value_t = 0.2)]
    noise_std: f64,
    /// Probability of the linear component.
    #[arg(long, default_value_t = 0.5)]
    mix: f64,
    #[arg(long, default_value_t = 0.0)]
    feature_min: f64,
    #[arg(long, default_value_t = 2.0)]
    feature_max: f64,
    /// Output CSV path; a `<out>.manifest.json` sidecar records the
    /// parameters.
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by every experiment-running subcommand. Unset flags
/// fall back to the config file (when given), then to defaults; flags
/// always win over the file.
#[derive(Args)]
struct ExperimentArgs {
    /// Registered dataset name, "toy", or a CSV file path.
    #[arg(long)]
    dataset: Option<String>,
    /// Target column for CSV file datasets: a name, or #index.
    #[arg(long, default_value = "y")]
    target: String,
    /// Base regression model: ols | brr | gpr.
    #[arg(long)]
    base: Option<String>,
    /// Calibration method: none | e-logistic | e-beta | gpc.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    train_thresholds: Option<usize>,
    #[arg(long)]
    predict_thresholds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on pooled GP-classifier training pairs.
    #[arg(long)]
    gpc_cap: Option<usize>,
    /// How sub-model predictions combine: density | cdf.
    #[arg(long)]
    ensemble: Option<String>,
    /// Reliability-diagram bin count.
    #[arg(long)]
    bins: Option<usize>,
    /// Worker threads for fold-level parallelism; 1 keeps timing
    /// fields reproducible.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Flat key=value config file; keys mirror the experiment-config
    /// field names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for emitted files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Print the resolved config (the config-file format) and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
#[command(after_help = "results.csv columns, in order: repeat, fold, method, base, k_train, \
mean_log_likelihood, calibration_deviation, wall_time_seconds. summary.json holds one \
aggregate row per (method, k_train); manifest.json lists the config snapshot, every \
emitted file, and per-fold status.")]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated training-grid sizes.
    #[arg(long, default_value = "8,16,32,48,64")]
    sweep: String,
    /// Comma-separated methods; defaults to the single --method.
    #[arg(long)]
    methods: Option<String>,
}

#[derive(Args)]
struct ReliabilityArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Cmd::GenerateToy(args) => cmd_generate_toy(&args),
        Cmd::Run(args) => cmd_run(&args.experiment),
        Cmd::Sweep(args) => cmd_sweep(&args),
        Cmd::Reliability(args) => cmd_reliability(&args.experiment),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}

fn cmd_generate_toy(args: &GenerateToyArgs) -> Result<i32, CliFailure> {
    if !(args.noise_std > 0.0) {
        return Err(CliFailure::usage("--noise-std must be positive"));
    }
    if !(0.0..=1.0).contains(&args.mix) {
        return Err(CliFailure::usage("--mix must lie in [0, 1]"));
    }
    if args.n < 2 {
        return Err(CliFailure::usage("--n must be at least 2"));
    }
    if !(args.feature_max > args.feature_min) {
        return Err(CliFailure::usage(
            "--feature-max must exceed --feature-min",
        ));
    }
    let params = ToyParams {
        n: args.n,
        slope: args.slope,
        flat_level: args.flat_level,
        noise_std: args.noise_std,
        mix: args.mix,
        feature_range: (args.feature_min, args.feature_max),
        seed: args.seed,
    };
    let ds = generate_toy(&params);
    let mut text = String::from("x,y\n");
    for (f, y) in ds.features.iter().zip(&ds.targets) {
        text.push_str(&format!("{},{}\n", f[0], y));
    }
    write_file(&args.out, &text)?;
    let manifest = serde_json::json!({
        "schema": "regcal-toy-manifest-v1",
        "n": params.n,
        "slope": params.slope,
        "flat_level": params.flat_level,
        "noise_std": params.noise_std,
        "mix": params.mix,
        "feature_range": [params.feature_range.0, params.feature_range.1],
        "seed": params.seed,
    });
    let sidecar = sibling(&args.out, ".manifest.json");
    write_file(&sidecar, &pretty(&manifest))?;
    Ok(EXIT_OK)
}

fn cmd_run(args: &ExperimentArgs) -> Result<i32, CliFailure> {
    let config = resolve_config(args)?;
    if args.print_config {
        print!("{}", config_to_text(&config));
        return Ok(EXIT_OK);
    }
    install_pool(args.jobs)?;
    let started = unix_now();
    let outcome = execute(&config, &args.target)?;
    let runs = vec![(config.clone(), outcome)];
    emit(&args.out_dir, &config, started, &runs, None)?;
    exit_for(&runs)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliFailure> {
    let base_config = resolve_config(&args.experiment)?;
    let sweep: Vec<usize> = parse_list(&args.sweep, "sweep", |s| s.parse::<usize>().ok())?;
    let methods: Vec<MethodKind> = match &args.methods {
        Some(text) => parse_list(text, "methods", |s| s.parse::<MethodKind>().ok())?,
        None => vec![base_config.method],
    };
    if args.experiment.print_config {
        print!("{}", config_to_text(&base_config));
        return Ok(EXIT_OK);
    }
    install_pool(args.experiment.jobs)?;
    let started = unix_now();
    let mut runs = Vec::new();
    for &method in &methods {
        for &k in &sweep {
            let config = ExperimentConfig {
                method,
                train_thresholds: k,
                predict_thresholds: base_config.predict_thresholds.max(k),
                ..base_config.clone()
            };
            let outcome = execute(&config, &args.experiment.target)?;
            runs.push((config, outcome));
        }
    }
    emit(&args.experiment.out_dir, &base_config, started, &runs, None)?;
    exit_for(&runs)
}

fn cmd_reliability(args: &ExperimentArgs) -> Result<i32, CliFailure> {
    let config = resolve_config(args)?;
    if args.print_config {
        print!("{}", config_to_text(&config));
        return Ok(EXIT_OK);
    }
    install_pool(args.jobs)?;
    let started = unix_now();
    let outcome = execute(&config, &args.target)?;
    let pooled = pool_reliability(&outcome.fold_results);
    let csv = reliability_csv(&config.method.to_string(), &pooled);
    let runs = vec![(config.clone(), outcome)];
    emit(&args.out_dir, &config, started, &runs, Some(&csv))?;
    exit_for(&runs)
}

/// Defaults, then the config file, then explicit flags.
fn resolve_config(args: &ExperimentArgs) -> Result<ExperimentConfig, CliFailure> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliFailure::io(format!("{}: {e}", path.display())))?;
        apply_config_text(&mut config, &text)
            .map_err(|e| CliFailure::usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(v) = &args.dataset {
        config.dataset = v.clone();
    }
    if let Some(v) = &args.base {
        config.base_model = v.parse().map_err(CliFailure::usage)?;
    }
    if let Some(v) = &args.method {
        config.method = v.parse().map_err(CliFailure::usage)?;
    }
    if let Some(v) = &args.ensemble {
        config.ensemble = v.parse().map_err(CliFailure::usage)?;
    }
    if let Some(v) = args.train_thresholds {
        config.train_thresholds = v;
    }
    if let Some(v) = args.predict_thresholds {
        config.predict_thresholds = v;
    }
    if let Some(v) = args.repeats {
        config.repeats = v;
    }
    if let Some(v) = args.folds {
        config.folds = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.gpc_cap {
        config.gpc_cap = v;
    }
    if let Some(v) = args.bins {
        config.reliability_bins = v;
    }
    Ok(config)
}

/// A dataset argument with path texture (a separator or an extension)
/// loads as a CSV file; anything else goes through the registry, with
/// "toy" generated on the fly.
fn execute(config: &ExperimentConfig, target: &str) -> Result<ExperimentOutcome, CliFailure> {
    let name = &config.dataset;
    let looks_like_path = name.contains(std::path::MAIN_SEPARATOR) || name.contains('.');
    if looks_like_path {
        let dataset = load_dataset_file(Path::new(name), target)?;
        run_experiment_on(config, &dataset).map_err(failure_from)
    } else {
        run_experiment(config).map_err(failure_from)
    }
}

fn load_dataset_file(path: &Path, target: &str) -> Result<Dataset, CliFailure> {
    load_csv(path, &ColumnSelector::parse(target), b',', true)
        .map_err(|e| failure_from(regcal::harness::HarnessError::Data(e)))
}

fn emit(
    out_dir: &Path,
    config: &ExperimentConfig,
    started: u64,
    runs: &[(ExperimentConfig, ExperimentOutcome)],
    reliability: Option<&str>,
) -> Result<Vec<String>, CliFailure> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliFailure::io(format!("{}: {e}", out_dir.display())))?;
    let mut outputs = vec![
        "results.csv".to_string(),
        "summary.json".to_string(),
        "manifest.json".to_string(),
    ];
    if reliability.is_some() {
        outputs.insert(0, "reliability.csv".to_string());
    }
    if let Some(csv) = reliability {
        write_file(&out_dir.join("reliability.csv"), csv)?;
    }
    write_file(&out_dir.join("results.csv"), &results_csv(runs))?;
    write_file(&out_dir.join("summary.json"), &pretty(&summary_json(runs)))?;
    let manifest = manifest_json(config, started, &outputs, runs);
    write_file(&out_dir.join("manifest.json"), &pretty(&manifest))?;
    Ok(outputs)
}

fn exit_for(runs: &[(ExperimentConfig, ExperimentOutcome)]) -> Result<i32, CliFailure> {
    let failed: usize = runs.iter().map(|(_, o)| o.failures.len()).sum();
    if failed > 0 {
        eprintln!("{failed} fold(s) failed; see manifest.json");
        Ok(EXIT_PARTIAL)
    } else {
        Ok(EXIT_OK)
    }
}

fn parse_list<T>(
    text: &str,
    what: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>, CliFailure> {
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(CliFailure::usage(format!("--{what} list is empty")));
    }
    items
        .into_iter()
        .map(|s| parse(s).ok_or_else(|| CliFailure::usage(format!("--{what}: bad entry {s:?}"))))
        .collect()
}

fn install_pool(jobs: usize) -> Result<(), CliFailure> {
    if jobs == 0 {
        return Err(CliFailure::usage("--jobs must be at least 1"));
    }
    // Ignore the error from a second install; the pool is process-wide.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global();
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliFailure> {
    std::fs::write(path, text).map_err(|e| CliFailure::io(format!("{}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json serialization");
    text.push('\n');
    text
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
