use std::io::Write;
use std::path::Path;

use veto_core::market_data::parse_timestamp;
use veto_core::{
    builtin_rule, emit_forecast_trace, evaluate_rule, explain, feature_names, fit_resistance_line,
    fit_support_line, load_external_forecasts, metrics_rows, parse_csv_str, parse_report_csv, parse_report_json,
    validate as validate_series, walk_forward, write_external_forecasts, Baseline, BaselineKind, Error,
    ExternalForecaster, Forecaster, GateModel, GateSource, PromptConfig, ReportFormat, Rule, Series,
};

use crate::config::{ForecasterChoice, RunConfig};
use crate::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())).into())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())).into())
}

/// Writes to `out` when given, otherwise to stdout, byte for byte.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io(e.to_string()).into())
        }
    }
}

fn load_series(cfg: &RunConfig) -> Result<Series, CliError> {
    let text = read(&cfg.data)?;
    Ok(validate_series(parse_csv_str(&text, &cfg.symbol)?)?)
}

fn load_rules(names: &[String]) -> Result<Vec<Rule>, CliError> {
    Ok(names.iter().map(|n| builtin_rule(n)).collect::<Result<Vec<_>, _>>()?)
}

fn make_forecaster(cfg: &RunConfig, series: &Series) -> Result<Box<dyn Forecaster>, CliError> {
    let baseline = |kind| {
        Box::new(Baseline {
            kind,
            coverage: cfg.coverage,
        }) as Box<dyn Forecaster>
    };
    Ok(match &cfg.forecaster {
        ForecasterChoice::Naive => baseline(BaselineKind::Naive),
        ForecasterChoice::Drift => baseline(BaselineKind::Drift),
        ForecasterChoice::Linreg => baseline(BaselineKind::Linreg),
        ForecasterChoice::External(path) => {
            let forecasts = load_external_forecasts(&read(path)?, series)?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "external".into());
            Box::new(ExternalForecaster::new(label, forecasts))
        }
    })
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    println!("OK {} candles", series.len());
    Ok(())
}

pub fn rules_scan(cfg: &RunConfig, all: bool) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let rules = load_rules(&cfg.rules)?;
    let lookback = rules.iter().map(Rule::max_lookback).max().unwrap_or(1);
    if series.len() < lookback {
        return Err(Error::InsufficientHistory {
            required: lookback,
            actual: series.len(),
        }
        .into());
    }

    let mut out = String::new();
    if cfg.format == ReportFormat::Csv {
        out.push_str("timestamp,index,rule,passed,failed_predicates\n");
    }
    let mut matches = 0usize;
    for end in (lookback - 1)..series.len() {
        let ts = series.format_timestamp(series.candles()[end].timestamp);
        for rule in &rules {
            let w = series.window_ending_at(end, rule.max_lookback())?;
            let v = evaluate_rule(rule, &w)?;
            matches += usize::from(v.passed);
            if !(v.passed || all) {
                continue;
            }
            match cfg.format {
                ReportFormat::Table => {
                    out.push_str(&format!("{ts} index {end}\n"));
                    for line in explain(&v) {
                        out.push_str(&format!("  {line}\n"));
                    }
                    out.push('\n');
                }
                ReportFormat::Json => {
                    let obj = serde_json::json!({ "timestamp": ts, "index": end, "verdict": v });
                    out.push_str(&obj.to_string());
                    out.push('\n');
                }
                ReportFormat::Csv => {
                    let failed: Vec<&str> = v.failed().map(|e| e.predicate.as_str()).collect();
                    out.push_str(&format!("{ts},{end},{},{},{}\n", v.rule, v.passed, failed.join(";")));
                }
            }
        }
    }
    let summary = format!("{matches} {}\n", if matches == 1 { "match" } else { "matches" });
    if cfg.format == ReportFormat::Table {
        out.push_str(&summary);
    } else {
        eprint!("{summary}");
    }
    emit(None, &out)
}

pub fn forecast(cfg: &RunConfig, at: Option<&str>, all: bool, out: Option<&Path>) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let forecaster = make_forecaster(cfg, &series)?;
    let lookback = cfg.walk.lookback;
    if lookback == 0 || series.len() < lookback {
        return Err(Error::InsufficientHistory {
            required: lookback.max(1),
            actual: series.len(),
        }
        .into());
    }
    let origins: Vec<usize> = if all {
        ((lookback - 1)..series.len())
            .filter(|&o| {
                series
                    .window_ending_at(o, lookback)
                    .map(|w| forecaster.has_origin(&w))
                    .unwrap_or(false)
            })
            .collect()
    } else if let Some(at) = at {
        let (ts, _) = parse_timestamp(at).map_err(|m| CliError::Usage(format!("--at: {m}")))?;
        let index = series
            .index_of(ts)
            .ok_or_else(|| Error::InvalidParameter(format!("no candle at {at}")))?;
        vec![index]
    } else {
        vec![series.len() - 1]
    };
    let mut forecasts = Vec::with_capacity(origins.len());
    for o in origins {
        let w = series.window_ending_at(o, lookback)?;
        forecasts.push((w.last().timestamp, forecaster.forecast(&w, cfg.walk.horizon)?));
    }
    emit(out, &write_external_forecasts(&forecasts, &series))
}

pub fn train_gate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let forecaster = make_forecaster(cfg, &series)?;
    let rules = load_rules(&cfg.rules)?;
    let model = veto_core::train_gate(&series, forecaster.as_ref(), &rules, &cfg.walk)?;
    let mut json = model.to_json();
    json.push('\n');
    emit(out, &json)
}

fn load_gate(cfg: &RunConfig, path: &Path, rules: &[Rule]) -> Result<GateModel, CliError> {
    let model = GateModel::from_json(&read(path)?)?;
    let expected = feature_names(&rules.iter().map(Rule::name).collect::<Vec<_>>());
    if model.feature_names != expected {
        return Err(Error::InvalidParameter(format!(
            "gate model features {:?} do not match the rule set {:?}",
            model.feature_names, expected
        ))
        .into());
    }
    Ok(match cfg.explicit_threshold {
        Some(t) => model.with_threshold(t)?,
        None => model,
    })
}

pub fn backtest(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let forecaster = make_forecaster(cfg, &series)?;
    let rules = load_rules(&cfg.rules)?;
    let gate = match &cfg.gate_model {
        Some(path) => GateSource::Pretrained(load_gate(cfg, path, &rules)?),
        None => GateSource::Train,
    };
    let bt = walk_forward(&series, forecaster.as_ref(), gate, &rules, &cfg.walk)?;
    let rows = metrics_rows(&bt.forecaster, &bt.records);
    if let Some(path) = &cfg.report {
        write(path, &veto_core::report(&rows, cfg.format))?;
    }
    if let Some(path) = &cfg.trace {
        write(path, &emit_forecast_trace(&bt.records, &series))?;
    }
    let executed = bt.records.iter().filter(|r| r.decision.executed).count();
    let mut text = veto_core::report(&rows, ReportFormat::Table);
    text.push_str(&format!(
        "\n{} origins evaluated, {executed} executed at threshold {}\n",
        bt.records.len(),
        bt.model.threshold
    ));
    emit(None, &text)
}

pub fn prompt(
    cfg: &RunConfig,
    asset: Option<String>,
    domain: Option<String>,
    samples: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let lookback = cfg.walk.lookback;
    if lookback == 0 || series.len() < lookback {
        return Err(Error::InsufficientHistory {
            required: lookback.max(1),
            actual: series.len(),
        }
        .into());
    }
    let w = series.window_ending_at(series.len() - 1, lookback)?;
    let defaults = PromptConfig::default();
    let pc = PromptConfig {
        asset: asset.unwrap_or(defaults.asset),
        domain: domain.unwrap_or(defaults.domain),
        lookback,
        horizon: cfg.walk.horizon,
        line_samples: samples.unwrap_or(defaults.line_samples),
        ..defaults
    };
    let text = veto_core::build_prompt(&w, &fit_support_line(&w)?, &fit_resistance_line(&w)?, &pc)?;
    emit(out, &text)
}

pub fn report(input: &Path, format: ReportFormat, out: Option<&Path>) -> Result<(), CliError> {
    let text = read(input)?;
    let rows = if text.trim_start().starts_with('[') {
        parse_report_json(&text)?
    } else {
        parse_report_csv(&text)?
    };
    emit(out, &veto_core::report(&rows, format))
}
