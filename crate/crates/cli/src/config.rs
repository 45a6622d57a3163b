use std::path::{Path, PathBuf};

use serde::Deserialize;
use veto_core::{ReportFormat, WalkForwardConfig};

use crate::CliError;

/// Optional JSON run configuration. Command-line flags take precedence.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub symbol: Option<String>,
    pub lookback: Option<usize>,
    pub horizon: Option<usize>,
    pub stride: Option<usize>,
    pub forecaster: Option<String>,
    pub rules: Option<Vec<String>>,
    pub require: Option<Vec<String>>,
    pub threshold: Option<f64>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub coverage: Option<f64>,
    pub gate_model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForecasterChoice {
    Naive,
    Drift,
    Linreg,
    External(PathBuf),
}

impl std::str::FromStr for ForecasterChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(Self::Naive),
            "drift" => Ok(Self::Drift),
            "linreg" => Ok(Self::Linreg),
            other => match other.strip_prefix("external:") {
                Some(path) if !path.is_empty() => Ok(Self::External(PathBuf::from(path))),
                _ => Err(format!(
                    "unknown forecaster `{other}` (naive, drift, linreg or external:<path>)"
                )),
            },
        }
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub symbol: String,
    pub forecaster: ForecasterChoice,
    pub coverage: f64,
    pub rules: Vec<String>,
    pub walk: WalkForwardConfig,
    /// Threshold given by flag or file, applied to a loaded gate model too.
    pub explicit_threshold: Option<f64>,
    pub gate_model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub format: ReportFormat,
}

/// Flag values as parsed; `None` means "not given".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub symbol: Option<String>,
    pub lookback: Option<usize>,
    pub horizon: Option<usize>,
    pub stride: Option<usize>,
    pub forecaster: Option<ForecasterChoice>,
    pub rules: Option<Vec<String>>,
    pub require: Option<Vec<String>>,
    pub threshold: Option<f64>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub coverage: Option<f64>,
    pub gate_model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub format: Option<ReportFormat>,
}

pub const DEFAULT_RULE: &str = veto_core::rules::BOTTOMING_TAIL;

impl RunConfig {
    pub fn resolve(flags: Overrides, file: FileConfig) -> Result<Self, CliError> {
        let data = flags
            .data
            .or(file.data)
            .ok_or_else(|| CliError::Usage("--data is required".into()))?;
        let forecaster = match (flags.forecaster, file.forecaster) {
            (Some(f), _) => f,
            (None, Some(s)) => s.parse().map_err(CliError::Usage)?,
            (None, None) => ForecasterChoice::Drift,
        };
        let format = match (flags.format, file.format) {
            (Some(f), _) => f,
            (None, Some(s)) => s.parse().map_err(|e: veto_core::Error| CliError::Usage(e.to_string()))?,
            (None, None) => ReportFormat::Table,
        };
        let explicit_threshold = flags.threshold.or(file.threshold);
        let defaults = WalkForwardConfig::default();
        let mut walk = WalkForwardConfig {
            lookback: flags.lookback.or(file.lookback).unwrap_or(defaults.lookback),
            horizon: flags.horizon.or(file.horizon).unwrap_or(defaults.horizon),
            stride: flags.stride.or(file.stride).unwrap_or(defaults.stride),
            train_fraction: flags
                .train_fraction
                .or(file.train_fraction)
                .unwrap_or(defaults.train_fraction),
            threshold: explicit_threshold.unwrap_or(defaults.threshold),
            train: defaults.train,
            required_rules: flags.require.or(file.require).unwrap_or_default(),
        };
        walk.train.epochs = flags.epochs.or(file.epochs).unwrap_or(walk.train.epochs);
        walk.train.learning_rate = flags
            .learning_rate
            .or(file.learning_rate)
            .unwrap_or(walk.train.learning_rate);
        walk.train.seed = flags.seed.or(file.seed).unwrap_or(walk.train.seed);

        Ok(Self {
            symbol: flags.symbol.or(file.symbol).unwrap_or_else(|| {
                data.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "SERIES".into())
            }),
            data,
            forecaster,
            coverage: flags
                .coverage
                .or(file.coverage)
                .unwrap_or(veto_core::ONE_SIGMA_COVERAGE),
            rules: flags
                .rules
                .or(file.rules)
                .unwrap_or_else(|| vec![DEFAULT_RULE.to_string()]),
            walk,
            explicit_threshold,
            gate_model: flags.gate_model.or(file.gate_model),
            report: flags.report.or(file.report),
            trace: flags.trace.or(file.trace),
            format,
        })
    }
}
