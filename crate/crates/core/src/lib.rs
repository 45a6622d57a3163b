//! Selective-execution forecasting engine.
//!
//! A primary forecaster makes a directional call; a logistic reliability
//! gate scores how likely that call is to be right; symbolic candlestick
//! rules supply vetoes and human-readable justifications. The evaluation
//! module runs the whole pipeline walk-forward and reports classification
//! metrics next to the execution rate.

pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod gate;
pub mod indicators;
pub mod market_data;
mod numfmt;
pub mod prompt;
pub mod rules;
pub mod synthetic;

pub use error::{Error, Result};
pub use evaluation::{
    confusion, emit_forecast_trace, execution_rate, f1_score, metrics, metrics_rows, parse_report_csv,
    parse_report_json, regate, report, train_gate, walk_forward, Backtest, ConfusionMatrix, EvalRecord, GateSource,
    Metrics, MetricsRow, ReportFormat, WalkForwardConfig,
};
pub use forecast::{
    direction_of, drift_forecast, linreg_forecast, load_external_forecasts, naive_forecast,
    write_external_forecasts, Baseline, BaselineKind, ExternalForecaster, Forecast, Forecaster, Interval,
    Side, ONE_SIGMA_COVERAGE,
};
pub use gate::{
    decide, extract_features, feature_names, meta_label, score, train, FeatureVector, GateDecision,
    GateModel, TrainConfig,
};
pub use indicators::{
    candle_geometry, fit_resistance_line, fit_support_line, percentile_rank, realized_volatility,
    sample_line, window_stats, CandleGeometry, LineKind, TrendLine, WindowStats,
};
pub use market_data::{parse_csv, parse_csv_str, pct_return, validate, Candle, Series, TimestampFormat, Window};
pub use numfmt::trim_fixed;
pub use prompt::{build_prompt, PromptConfig};
pub use rules::{bottoming_tail_rule, builtin_rule, evaluate_rule, explain, Predicate, PredicateKind, Rule, RuleVerdict, TraceEntry};
