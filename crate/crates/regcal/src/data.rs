//! Dataset handling: the two-line synthetic generator, CSV ingestion
//! with missing-value filtering, train-split standardization, and a
//! small registry describing the supported public regression tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::numerics::seeded_rng;

/// Environment variable pointing at the directory with downloaded
/// dataset files.
pub const DATA_DIR_ENV: &str = "REGCAL_DATA_DIR";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("target column {0:?} not present")]
    TargetColumnMissing(String),
    #[error("column {0:?} is not numeric")]
    NonNumericColumn(String),
    #[error("no usable rows after dropping {dropped} incomplete rows")]
    EmptyAfterFiltering { dropped: usize },
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("registry line {line}: {message}")]
    MalformedRegistry { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parameters of the synthetic two-line mixture. Features are uniform
/// on the range; each target follows the ascending line slope*x with
/// probability `mix`, otherwise the flat line, plus Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub n: usize,
    pub slope: f64,
    pub flat_level: f64,
    pub noise_std: f64,
    pub mix: f64,
    pub feature_range: (f64, f64),
    pub seed: u64,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams {
            n: 2000,
            slope: 2.0,
            flat_level: 1.0,
            noise_std: 0.2,
            mix: 0.5,
            feature_range: (0.0, 2.0),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Generated { params: ToyParams },
    Loaded { path: PathBuf },
}

/// A fully ingested dataset: no missing values remain, every feature
/// cell is numeric. Rows rejected on the way in are counted in
/// `dropped_rows`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub provenance: Provenance,
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Draw the two-line mixture. Per instance the stream is consumed in a
/// fixed order (feature, branch, noise), so equal parameters give
/// bit-identical datasets.
pub fn generate_toy(p: &ToyParams) -> Dataset {
    assert!(p.noise_std > 0.0, "noise_std must be positive");
    assert!(p.feature_range.0 < p.feature_range.1);
    assert!(p.mix > 0.0 && p.mix <= 1.0);
    assert!(p.n >= 1);
    let mut rng = seeded_rng(p.seed);
    let noise = Normal::new(0.0, p.noise_std).expect("validated noise width");
    let mut features = Vec::with_capacity(p.n);
    let mut targets = Vec::with_capacity(p.n);
    for _ in 0..p.n {
        let x = rng.random_range(p.feature_range.0..p.feature_range.1);
        let ascending = rng.random_range(0.0..1.0) < p.mix;
        let eps = noise.sample(&mut rng);
        let y = if ascending {
            p.slope * x + eps
        } else {
            p.flat_level + eps
        };
        features.push(vec![x]);
        targets.push(y);
    }
    Dataset {
        name: "toy".into(),
        features,
        targets,
        provenance: Provenance::Generated { params: p.clone() },
        dropped_rows: 0,
    }
}

/// How to pick the target column out of a table.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSelector {
    Name(String),
    Index(usize),
}

impl ColumnSelector {
    /// Parse "#3" as an index, anything else as a name.
    pub fn parse(s: &str) -> ColumnSelector {
        if let Some(rest) = s.strip_prefix('#') {
            if let Ok(i) = rest.parse::<usize>() {
                return ColumnSelector::Index(i);
            }
        }
        ColumnSelector::Name(s.to_string())
    }
}

/// Load a delimited numeric table. Rows with any cell that fails to
/// parse (including empty cells) are dropped and counted; a column that
/// never parses in any row is reported as non-numeric instead, since
/// dropping everything would only mask the schema problem.
pub fn load_csv(
    path: &Path,
    target_column: &ColumnSelector,
    delimiter: u8,
    has_header: bool,
) -> Result<Dataset, DataError> {
    if !path.exists() {
        return Err(DataError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|_| DataError::FileNotFound(path.to_path_buf()))?;

    let mut column_names: Vec<String> = if has_header {
        reader.headers()?.iter().map(|s| s.trim().to_string()).collect()
    } else {
        Vec::new()
    };

    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if column_names.is_empty() {
            column_names = (0..record.len()).map(|i| format!("col{i}")).collect();
        }
        let parsed: Vec<Option<f64>> = record
            .iter()
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() {
                    None
                } else {
                    cell.parse::<f64>().ok().filter(|v| v.is_finite())
                }
            })
            .collect();
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyAfterFiltering { dropped: 0 });
    }
    let width = column_names.len();

    let target_idx = match target_column {
        ColumnSelector::Index(i) if *i < width => *i,
        ColumnSelector::Index(i) => {
            return Err(DataError::TargetColumnMissing(format!("#{i}")));
        }
        ColumnSelector::Name(name) => column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DataError::TargetColumnMissing(name.clone()))?,
    };

    // A column that parses in no complete-width row is a schema error.
    for (j, name) in column_names.iter().enumerate() {
        let parses = rows
            .iter()
            .filter(|r| r.len() == width)
            .any(|r| r[j].is_some());
        let any_full_width = rows.iter().any(|r| r.len() == width);
        if any_full_width && !parses {
            return Err(DataError::NonNumericColumn(name.clone()));
        }
    }

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0usize;
    for row in &rows {
        if row.len() != width || row.iter().any(|c| c.is_none()) {
            dropped += 1;
            continue;
        }
        let mut feat = Vec::with_capacity(width - 1);
        for (j, cell) in row.iter().enumerate() {
            if j != target_idx {
                feat.push(cell.unwrap());
            }
        }
        features.push(feat);
        targets.push(row[target_idx].unwrap());
    }
    if targets.is_empty() {
        return Err(DataError::EmptyAfterFiltering { dropped });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset {
        name,
        features,
        targets,
        provenance: Provenance::Loaded {
            path: path.to_path_buf(),
        },
        dropped_rows: dropped,
    })
}

/// Column-wise affine transform fitted on a training split. Constant
/// columns map to zero with scale one, so the inverse is always exact.
#[derive(Debug, Clone)]
pub struct Standardizer {
    feature_means: Vec<f64>,
    feature_scales: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
}

const SCALE_FLOOR: f64 = 1e-12;

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let scale = var.sqrt();
    if scale <= SCALE_FLOOR {
        (mean, 1.0)
    } else {
        (mean, scale)
    }
}

/// Fit means and scales on the training split only; apply the result to
/// any split to avoid leaking test statistics into the fit.
pub fn fit_standardizer(features: &[Vec<f64>], targets: &[f64]) -> Standardizer {
    assert!(!targets.is_empty());
    let d = features.first().map_or(0, |r| r.len());
    let n = targets.len();
    let mut feature_means = Vec::with_capacity(d);
    let mut feature_scales = Vec::with_capacity(d);
    for j in 0..d {
        let (m, s) = mean_and_scale(features.iter().map(|r| r[j]), n);
        feature_means.push(m);
        feature_scales.push(s);
    }
    let (target_mean, target_scale) = mean_and_scale(targets.iter().copied(), n);
    Standardizer {
        feature_means,
        feature_scales,
        target_mean,
        target_scale,
    }
}

impl Standardizer {
    pub fn transform_features(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(self.feature_means.iter().zip(&self.feature_scales))
                    .map(|(&v, (&m, &s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }

    pub fn transform_targets(&self, targets: &[f64]) -> Vec<f64> {
        targets
            .iter()
            .map(|&y| (y - self.target_mean) / self.target_scale)
            .collect()
    }

    pub fn inverse_targets(&self, standardized: &[f64]) -> Vec<f64> {
        standardized
            .iter()
            .map(|&z| z * self.target_scale + self.target_mean)
            .collect()
    }

    pub fn inverse_features(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(self.feature_means.iter().zip(&self.feature_scales))
                    .map(|(&z, (&m, &s))| z * s + m)
                    .collect()
            })
            .collect()
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    /// Change of variables: a density d in standardized target units is
    /// d / target_scale in the original units.
    pub fn density_to_original_units(&self, density: f64) -> f64 {
        density / self.target_scale
    }

    /// The additive log-density counterpart of
    /// [`Standardizer::density_to_original_units`].
    pub fn log_density_adjustment(&self) -> f64 {
        -self.target_scale.ln()
    }
}

/// What the loader needs to know about one named dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub file_name: String,
    pub target: ColumnSelector,
    pub delimiter: u8,
    pub has_header: bool,
}

/// The five public regression tables the benchmark targets. Files are
/// not bundled; place the downloaded copies under [`DATA_DIR_ENV`] with
/// these names.
pub fn builtin_registry() -> BTreeMap<String, RegistryEntry> {
    let entry = |file: &str, target: &str, delimiter: u8, has_header: bool| RegistryEntry {
        file_name: file.into(),
        target: ColumnSelector::parse(target),
        delimiter,
        has_header,
    };
    BTreeMap::from([
        ("diabetes".into(), entry("diabetes.tab", "Y", b'\t', true)),
        ("boston".into(), entry("housing.csv", "MEDV", b',', true)),
        ("airfoil".into(), entry("airfoil_self_noise.dat", "#5", b'\t', false)),
        ("forestfire".into(), entry("forestfires.csv", "area", b',', true)),
        ("concrete".into(), entry("concrete.csv", "#8", b',', true)),
    ])
}

fn parse_delimiter(s: &str) -> Option<u8> {
    match s {
        "comma" => Some(b','),
        "tab" => Some(b'\t'),
        "semicolon" => Some(b';'),
        "space" => Some(b' '),
        _ if s.len() == 1 => Some(s.as_bytes()[0]),
        _ => None,
    }
}

fn delimiter_name(d: u8) -> String {
    match d {
        b',' => "comma".into(),
        b'\t' => "tab".into(),
        b';' => "semicolon".into(),
        b' ' => "space".into(),
        other => (other as char).to_string(),
    }
}

/// Parse a registry file. The format is line-based: `[name]` opens an
/// entry, followed by `key = value` pairs with keys `path`, `target`
/// (column name, or `#index`), `delimiter` (comma|tab|semicolon|space or
/// a single character; default comma) and `header` (yes|no; default
/// yes). Blank lines and lines starting with `#` are ignored.
pub fn parse_registry(text: &str) -> Result<BTreeMap<String, RegistryEntry>, DataError> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, RegistryEntry)> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| DataError::MalformedRegistry {
            line: lineno + 1,
            message: message.into(),
        };
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if let Some((n, e)) = current.take() {
                out.insert(n, e);
            }
            current = Some((
                name.trim().to_string(),
                RegistryEntry {
                    file_name: String::new(),
                    target: ColumnSelector::Index(usize::MAX),
                    delimiter: b',',
                    has_header: true,
                },
            ));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        let entry = current
            .as_mut()
            .map(|(_, e)| e)
            .ok_or_else(|| err("key before any [name] section"))?;
        match key {
            "path" => entry.file_name = value.to_string(),
            "target" => entry.target = ColumnSelector::parse(value),
            "delimiter" => {
                entry.delimiter =
                    parse_delimiter(value).ok_or_else(|| err("unknown delimiter"))?;
            }
            "header" => {
                entry.has_header = match value {
                    "yes" | "true" => true,
                    "no" | "false" => false,
                    _ => return Err(err("header must be yes or no")),
                };
            }
            _ => return Err(err("unknown key")),
        }
    }
    if let Some((n, e)) = current.take() {
        out.insert(n, e);
    }
    for (name, e) in &out {
        if e.file_name.is_empty() {
            return Err(DataError::MalformedRegistry {
                line: 0,
                message: format!("entry {name:?} has no path"),
            });
        }
        if e.target == ColumnSelector::Index(usize::MAX) {
            return Err(DataError::MalformedRegistry {
                line: 0,
                message: format!("entry {name:?} has no target"),
            });
        }
    }
    Ok(out)
}

/// Render a registry in the format [`parse_registry`] accepts.
pub fn render_registry(registry: &BTreeMap<String, RegistryEntry>) -> String {
    let mut s = String::new();
    for (name, e) in registry {
        s.push_str(&format!("[{name}]\npath = {}\n", e.file_name));
        match &e.target {
            ColumnSelector::Name(n) => s.push_str(&format!("target = {n}\n")),
            ColumnSelector::Index(i) => s.push_str(&format!("target = #{i}\n")),
        }
        s.push_str(&format!("delimiter = {}\n", delimiter_name(e.delimiter)));
        s.push_str(&format!(
            "header = {}\n\n",
            if e.has_header { "yes" } else { "no" }
        ));
    }
    s
}

/// Load a registered dataset by name. Relative paths resolve against
/// `base_dir` when given, otherwise against [`DATA_DIR_ENV`] (falling
/// back to the working directory).
pub fn load_registered(
    name: &str,
    registry: &BTreeMap<String, RegistryEntry>,
    base_dir: Option<&Path>,
) -> Result<Dataset, DataError> {
    let entry = registry
        .get(name)
        .ok_or_else(|| DataError::UnknownDataset(name.to_string()))?;
    let mut path = PathBuf::from(&entry.file_name);
    if path.is_relative() {
        let base = base_dir
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_default();
        path = base.join(path);
    }
    let mut ds = load_csv(&path, &entry.target, entry.delimiter, entry.has_header)?;
    ds.name = name.to_string();
    Ok(ds)
}
