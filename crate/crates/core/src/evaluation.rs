//! Walk-forward backtest of forecaster + gate, confusion matrices, the
//! metric table and report/trace emission.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{direction_of, Forecast, Forecaster, Side};
use crate::gate::{
    decide, extract_features, feature_names, meta_label, realized_side, score, train, FeatureVector,
    GateDecision, GateModel, TrainConfig,
};
use crate::market_data::Series;
use crate::rules::{evaluate_rule, Rule, RuleVerdict};

/// Header of the report CSV.
pub const REPORT_CSV_HEADER: &str = "model,side,accuracy,precision,recall,f1,execution_rate";
/// Header of the forecast trace CSV.
pub const TRACE_CSV_HEADER: &str = "origin_timestamp,step,predicted,lower,upper,actual,executed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForwardConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Fraction of eligible origins used to train the gate.
    pub train_fraction: f64,
    /// Gate threshold for a freshly trained model.
    pub threshold: f64,
    pub train: TrainConfig,
    /// Rules that must pass for execution. Other rules only feed features.
    pub required_rules: Vec<String>,
}

impl Default for WalkForwardConfig {
    fn default() -> Self {
        Self {
            lookback: 110,
            horizon: 7,
            stride: 1,
            train_fraction: 0.7,
            threshold: 0.5,
            train: TrainConfig::default(),
            required_rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum GateSource {
    /// Train on the leading segment of the series.
    Train,
    Pretrained(GateModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub origin_index: usize,
    pub origin_timestamp: i64,
    pub predicted: Side,
    pub realized: Side,
    pub decision: GateDecision,
    pub verdicts: Vec<RuleVerdict>,
    pub forecast: Forecast,
}

#[derive(Debug, Clone)]
pub struct Backtest {
    pub forecaster: String,
    pub model: GateModel,
    pub records: Vec<EvalRecord>,
}

/// Origins with a full lookback behind them and a full horizon ahead.
fn eligible_origins(series: &Series, forecaster: &dyn Forecaster, cfg: &WalkForwardConfig) -> Result<Vec<usize>> {
    if cfg.lookback == 0 || cfg.horizon == 0 || cfg.stride == 0 {
        return Err(Error::InvalidParameter("lookback, horizon and stride must be ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.train_fraction) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {} outside [0, 1]",
            cfg.train_fraction
        )));
    }
    let required = cfg.lookback + cfg.horizon;
    if series.len() < required {
        return Err(Error::InsufficientHistory {
            required,
            actual: series.len(),
        });
    }
    let mut origins = Vec::new();
    for o in (cfg.lookback - 1)..(series.len() - cfg.horizon) {
        let w = series.window_ending_at(o, cfg.lookback)?;
        if forecaster.has_origin(&w) {
            origins.push(o);
        }
    }
    Ok(origins)
}

struct Prepared {
    origin: usize,
    forecast: Forecast,
    verdicts: Vec<RuleVerdict>,
    features: FeatureVector,
}

fn prepare(
    series: &Series,
    origin: usize,
    forecaster: &dyn Forecaster,
    rules: &[Rule],
    cfg: &WalkForwardConfig,
) -> Result<Prepared> {
    let w = series.window_ending_at(origin, cfg.lookback)?;
    let forecast = forecaster.forecast(&w, cfg.horizon)?;
    let verdicts = rules
        .iter()
        .map(|r| evaluate_rule(r, &w))
        .collect::<Result<Vec<_>>>()?;
    let features = extract_features(&w, &forecast, &verdicts)?;
    Ok(Prepared {
        origin,
        forecast,
        verdicts,
        features,
    })
}

fn fit_gate(
    series: &Series,
    origins: &[usize],
    forecaster: &dyn Forecaster,
    rules: &[Rule],
    cfg: &WalkForwardConfig,
) -> Result<GateModel> {
    let mut dataset = Vec::with_capacity(origins.len());
    for &o in origins {
        let p = prepare(series, o, forecaster, rules, cfg)?;
        let label = meta_label(&p.forecast, series)?;
        dataset.push((p.features, label));
    }
    let names = feature_names(&rules.iter().map(|r| r.name()).collect::<Vec<_>>());
    train(&dataset, names, cfg.threshold, cfg.train)
}

/// Trains a gate on every origin of `series` that has a full lookback and
/// horizon. `train_fraction` and `stride` are ignored.
pub fn train_gate(
    series: &Series,
    forecaster: &dyn Forecaster,
    rules: &[Rule],
    cfg: &WalkForwardConfig,
) -> Result<GateModel> {
    let origins = eligible_origins(series, forecaster, cfg)?;
    fit_gate(series, &origins, forecaster, rules, cfg)
}

/// Chronological walk-forward evaluation. The gate is trained once on the
/// first `train_fraction` of eligible origins (unless pretrained); the next
/// `horizon` origins are skipped as an embargo; the rest are evaluated every
/// `stride` origins.
pub fn walk_forward(
    series: &Series,
    forecaster: &dyn Forecaster,
    gate: GateSource,
    rules: &[Rule],
    cfg: &WalkForwardConfig,
) -> Result<Backtest> {
    let origins = eligible_origins(series, forecaster, cfg)?;
    let n_train = (cfg.train_fraction * origins.len() as f64).floor() as usize;
    let eval_start = if n_train > 0 { n_train + cfg.horizon } else { 0 };
    if eval_start >= origins.len() {
        return Err(Error::InsufficientHistory {
            required: cfg.lookback + cfg.horizon + eval_start + 1,
            actual: series.len(),
        });
    }

    let model = match gate {
        GateSource::Pretrained(m) => m,
        GateSource::Train => {
            if n_train == 0 {
                return Err(Error::InvalidParameter(
                    "training segment is empty; raise the train fraction or supply a model".into(),
                ));
            }
            fit_gate(series, &origins[..n_train], forecaster, rules, cfg)?
        }
    };

    let records = origins[eval_start..]
        .iter()
        .step_by(cfg.stride)
        .map(|&o| {
            let p = prepare(series, o, forecaster, rules, cfg)?;
            let s = score(&model, &p.features)?;
            let decision = decide(s, &model, &p.verdicts, &cfg.required_rules)?;
            let origin_close = series.close(p.origin)?;
            Ok(EvalRecord {
                origin_index: p.origin,
                origin_timestamp: series.candles()[p.origin].timestamp,
                predicted: direction_of(&p.forecast, origin_close),
                realized: realized_side(series, p.origin, cfg.horizon)?,
                decision,
                verdicts: p.verdicts,
                forecast: p.forecast,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Backtest {
        forecaster: forecaster.label(),
        model,
        records,
    })
}

/// Re-runs the gate decision at another threshold, keeping scores and
/// verdicts.
pub fn regate<S: AsRef<str>>(
    records: &[EvalRecord],
    model: &GateModel,
    threshold: f64,
    required_rules: &[S],
) -> Result<Vec<EvalRecord>> {
    let m = model.clone().with_threshold(threshold)?;
    records
        .iter()
        .map(|r| {
            let decision = decide(r.decision.score, &m, &r.verdicts, required_rules)?;
            Ok(EvalRecord {
                decision,
                ..r.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Counts records against `positive`; with `gated`, only executed ones.
pub fn confusion(records: &[EvalRecord], positive: Side, gated: bool) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for r in records.iter().filter(|r| !gated || r.decision.executed) {
        match (r.predicted == positive, r.realized == positive) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    cm
}

/// Classification metrics; `None` where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let sum = precision + recall;
    (sum > 0.0).then(|| 2.0 * precision * recall / sum)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    Metrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1,
    }
}

/// Share of records the gate executed.
pub fn execution_rate(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let executed = records.iter().filter(|r| r.decision.executed).count();
    Ok(executed as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub side: Side,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub execution_rate: Option<f64>,
}

/// Ungated and gated rows for Up, then Down. A side's execution rate is the
/// share of calls on that side that were executed.
pub fn metrics_rows(label: &str, records: &[EvalRecord]) -> Vec<MetricsRow> {
    let mut rows = Vec::with_capacity(4);
    for side in [Side::Up, Side::Down] {
        let called: Vec<EvalRecord> = records.iter().filter(|r| r.predicted == side).cloned().collect();
        for gated in [false, true] {
            let m = metrics(&confusion(records, side, gated));
            let rate = if gated {
                execution_rate(&called).ok()
            } else {
                (!called.is_empty()).then_some(1.0)
            };
            rows.push(MetricsRow {
                model: if gated { format!("{label} + gate") } else { label.to_string() },
                side,
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                execution_rate: rate,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

const UNDEFINED: &str = "—";

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.0}%", x * 100.0),
        None => UNDEFINED.to_string(),
    }
}

fn render_table(rows: &[MetricsRow]) -> String {
    let header = ["Models", "Side", "Accuracy", "Precision", "Recall", "F1 score", "Execution Rate"];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                r.side.to_string(),
                pct(r.accuracy),
                pct(r.precision),
                pct(r.recall),
                pct(r.f1),
                pct(r.execution_rate),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i < 2 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    writeln!(out, "{}", line(&header)).unwrap();
    for row in &body {
        writeln!(out, "{}", line(row)).unwrap();
    }
    out
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(rows: &[MetricsRow]) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    wtr.write_record(REPORT_CSV_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        wtr.write_record([
            r.model.clone(),
            r.side.to_string(),
            opt_field(r.accuracy),
            opt_field(r.precision),
            opt_field(r.recall),
            opt_field(r.f1),
            opt_field(r.execution_rate),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn report(rows: &[MetricsRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(rows),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(rows),
    }
}

/// Reads a report written with [`ReportFormat::Csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or(Error::EmptyInput)?
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?;
    let found = header.iter().collect::<Vec<_>>().join(",");
    if found != REPORT_CSV_HEADER {
        return Err(Error::BadHeader {
            expected: REPORT_CSV_HEADER.to_string(),
            found,
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let side = match &rec[1] {
            "Up" => Side::Up,
            "Down" => Side::Down,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("unknown side `{other}`"),
                })
            }
        };
        let num = |k: usize| -> Result<Option<f64>> {
            let f = &rec[k];
            if f.is_empty() {
                return Ok(None);
            }
            f.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric `{f}`"),
            })
        };
        rows.push(MetricsRow {
            model: rec[0].to_string(),
            side,
            accuracy: num(2)?,
            precision: num(3)?,
            recall: num(4)?,
            f1: num(5)?,
            execution_rate: num(6)?,
        });
    }
    Ok(rows)
}

pub fn parse_report_json(text: &str) -> Result<Vec<MetricsRow>> {
    Ok(serde_json::from_str(text)?)
}

/// Long-format forecast-versus-actual CSV, one row per forecast step.
pub fn emit_forecast_trace(records: &[EvalRecord], series: &Series) -> String {
    let mut out = String::new();
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in records {
        let ts = series.format_timestamp(r.origin_timestamp);
        for (k, p) in r.forecast.path.iter().enumerate() {
            let (lower, upper) = match &r.forecast.interval {
                Some(iv) => (iv.lower[k].to_string(), iv.upper[k].to_string()),
                None => (String::new(), String::new()),
            };
            let actual = series
                .candles()
                .get(r.origin_index + k + 1)
                .map(|c| c.close.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{ts},{},{p},{lower},{upper},{actual},{}",
                k + 1,
                r.decision.executed
            )
            .unwrap();
        }
    }
    out
}
