//! `veto`: command-line front end for the selective-execution engine.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use veto_core::ReportFormat;

use config::{FileConfig, ForecasterChoice, Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config file. Exit code 2.
    Usage(String),
    /// Validation or domain failure. Exit code 1.
    Domain(veto_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            // candle indices are zero-based; data rows count from 1
            CliError::Domain(veto_core::Error::Validation { index, invariant }) => {
                write!(f, "row {}: violates `{invariant}`", index + 1)
            }
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl From<veto_core::Error> for CliError {
    fn from(e: veto_core::Error) -> Self {
        CliError::Domain(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "veto", version, about = "Gated directional forecasting with rule vetoes")]
struct Cli {
    /// JSON run configuration; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Args)]
struct DataArgs {
    /// OHLCV CSV file.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Symbol label; defaults to the file stem.
    #[arg(long)]
    symbol: Option<String>,
}

#[derive(Debug, Default, Args)]
struct WindowArgs {
    /// Candles of history behind each origin [default: 110].
    #[arg(long)]
    lookback: Option<usize>,
    /// Steps ahead to forecast [default: 7].
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Debug, Default, Args)]
struct ForecasterArgs {
    /// naive, drift, linreg or external:<path> [default: drift].
    #[arg(long)]
    forecaster: Option<ForecasterChoice>,
    /// Central coverage of baseline prediction intervals [default: one sigma].
    #[arg(long)]
    coverage: Option<f64>,
}

#[derive(Debug, Default, Args)]
struct GateArgs {
    /// Rule feeding the gate; repeat for several [default: bottoming_tail_candle].
    #[arg(long = "rule", value_name = "NAME")]
    rules: Vec<String>,
    /// Gate score needed to execute [default: 0.5].
    #[arg(long)]
    threshold: Option<f64>,
    /// Gradient-descent epochs [default: 500].
    #[arg(long)]
    epochs: Option<usize>,
    /// Gradient-descent step size [default: 0.1].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Recorded in the model for reproducibility [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a candle file.
    Validate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Slide candlestick rules across a series and explain the matches.
    RulesScan {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "rule", value_name = "NAME")]
        rules: Vec<String>,
        /// Print every evaluated candle, not only matches.
        #[arg(long)]
        all: bool,
        /// table (explanation blocks), json (one object per line) or csv.
        #[arg(long)]
        format: Option<ReportFormat>,
    },
    /// Run a baseline forecaster and write predictions in the import format.
    Forecast {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        forecaster: ForecasterArgs,
        /// Origin timestamp [default: last candle].
        #[arg(long, conflicts_with = "all")]
        at: Option<String>,
        /// Forecast at every origin with a full lookback.
        #[arg(long)]
        all: bool,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train the reliability gate on a whole series and save it as JSON.
    TrainGate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        forecaster: ForecasterArgs,
        #[command(flatten)]
        gate: GateArgs,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Walk-forward evaluation with gated and ungated metrics.
    Backtest {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        forecaster: ForecasterArgs,
        #[command(flatten)]
        gate: GateArgs,
        /// Evaluate every n-th origin [default: 1].
        #[arg(long)]
        stride: Option<usize>,
        /// Share of origins used for training [default: 0.7].
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Rule that must pass for execution; repeatable.
        #[arg(long = "require", value_name = "NAME")]
        require: Vec<String>,
        /// Use a saved gate instead of training one.
        #[arg(long, value_name = "FILE")]
        gate_model: Option<PathBuf>,
        /// Write the metrics report here, in --format.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Write the per-step forecast trace CSV here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        #[arg(long)]
        format: Option<ReportFormat>,
    },
    /// Emit the text prefix for the trailing window.
    Prompt {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Asset name used in the text [default: Bitcoin].
        #[arg(long)]
        asset: Option<String>,
        /// Replacement for the domain paragraph.
        #[arg(long)]
        domain: Option<String>,
        /// Points sampled along each line [default: 6].
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Re-render a saved metrics report.
    Report {
        /// Report written by `backtest` in json or csv.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long)]
        format: Option<ReportFormat>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn non_empty(v: Vec<String>) -> Option<Vec<String>> {
    (!v.is_empty()).then_some(v)
}

fn base_overrides(data: DataArgs, window: WindowArgs) -> Overrides {
    Overrides {
        data: data.data,
        symbol: data.symbol,
        lookback: window.lookback,
        horizon: window.horizon,
        ..Default::default()
    }
}

fn with_forecaster(mut o: Overrides, f: ForecasterArgs) -> Overrides {
    o.forecaster = f.forecaster;
    o.coverage = f.coverage;
    o
}

fn with_gate(mut o: Overrides, g: GateArgs) -> Overrides {
    o.rules = non_empty(g.rules);
    o.threshold = g.threshold;
    o.epochs = g.epochs;
    o.learning_rate = g.learning_rate;
    o.seed = g.seed;
    o
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate { data } => {
            let cfg = RunConfig::resolve(base_overrides(data, WindowArgs::default()), file)?;
            commands::validate(&cfg)
        }
        Command::RulesScan {
            data,
            rules,
            all,
            format,
        } => {
            let mut o = base_overrides(data, WindowArgs::default());
            o.rules = non_empty(rules);
            o.format = format;
            let cfg = RunConfig::resolve(o, file)?;
            commands::rules_scan(&cfg, all)
        }
        Command::Forecast {
            data,
            window,
            forecaster,
            at,
            all,
            out,
        } => {
            let cfg = RunConfig::resolve(with_forecaster(base_overrides(data, window), forecaster), file)?;
            commands::forecast(&cfg, at.as_deref(), all, out.as_deref())
        }
        Command::TrainGate {
            data,
            window,
            forecaster,
            gate,
            out,
        } => {
            let o = with_gate(with_forecaster(base_overrides(data, window), forecaster), gate);
            let cfg = RunConfig::resolve(o, file)?;
            commands::train_gate(&cfg, out.as_deref())
        }
        Command::Backtest {
            data,
            window,
            forecaster,
            gate,
            stride,
            train_fraction,
            require,
            gate_model,
            report,
            trace,
            format,
        } => {
            let mut o = with_gate(with_forecaster(base_overrides(data, window), forecaster), gate);
            o.stride = stride;
            o.train_fraction = train_fraction;
            o.require = non_empty(require);
            o.gate_model = gate_model;
            o.report = report;
            o.trace = trace;
            o.format = format;
            let cfg = RunConfig::resolve(o, file)?;
            commands::backtest(&cfg)
        }
        Command::Prompt {
            data,
            window,
            asset,
            domain,
            samples,
            out,
        } => {
            let cfg = RunConfig::resolve(base_overrides(data, window), file)?;
            commands::prompt(&cfg, asset, domain, samples, out.as_deref())
        }
        Command::Report { input, format, out } => {
            let format = format
                .or(file
                    .format
                    .as_deref()
                    .map(str::parse)
                    .transpose()
                    .map_err(|e: veto_core::Error| CliError::Usage(e.to_string()))?)
                .unwrap_or(ReportFormat::Table);
            commands::report(&input, format, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
