//! Primary directional model: baseline forecasters and import of external
//! model predictions.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::indicators::{least_squares, realized_volatility};
use crate::market_data::{parse_timestamp, Series, Window};

/// Central coverage of one standard deviation of a normal distribution.
/// Forecast plots conventionally label this band "68%".
pub const ONE_SIGMA_COVERAGE: f64 = 0.682_689_492_137_085_9;

/// Exact header of the external forecast file (the last two columns are
/// optional, both or neither).
pub const EXTERNAL_HEADER: &str = "origin_timestamp,step,predicted_close,lower,upper";
const EXTERNAL_HEADER_SHORT: &str = "origin_timestamp,step,predicted_close";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Up,
    Down,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Up => Side::Down,
            Side::Down => Side::Up,
        }
    }

    /// Up only on a strict rise; no change counts as Down.
    pub fn of_move(from: f64, to: f64) -> Side {
        if to > from {
            Side::Up
        } else {
            Side::Down
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Up => "Up",
            Side::Down => "Down",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// A multi-step close forecast made after observing `origin_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub origin_index: usize,
    pub path: Vec<f64>,
    pub interval: Option<Interval>,
}

impl Forecast {
    pub fn new(origin_index: usize, path: Vec<f64>, interval: Option<Interval>) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::InvalidParameter("forecast horizon must be ≥ 1".into()));
        }
        if let Some(iv) = &interval {
            if iv.lower.len() != path.len() || iv.upper.len() != path.len() {
                return Err(Error::InvalidParameter("interval length differs from path".into()));
            }
            let ordered = path
                .iter()
                .zip(&iv.lower)
                .zip(&iv.upper)
                .all(|((p, l), u)| l <= p && p <= u);
            if !ordered {
                return Err(Error::InvalidParameter("interval must bracket the path".into()));
            }
        }
        Ok(Self {
            origin_index,
            path,
            interval,
        })
    }

    pub fn horizon(&self) -> usize {
        self.path.len()
    }

    pub fn final_value(&self) -> f64 {
        *self.path.last().expect("path is non-empty")
    }
}

/// Direction called at the horizon endpoint.
pub fn direction_of(f: &Forecast, last_close: f64) -> Side {
    Side::of_move(last_close, f.final_value())
}

/// Two-sided standard-normal quantile for a central coverage level.
pub fn coverage_z(coverage: f64) -> Result<f64> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidParameter(format!("coverage {coverage} outside (0, 1)")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + coverage / 2.0))
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be ≥ 1".into()));
    }
    Ok(())
}

/// Random-walk band: `path ± z·σ·√k`, σ the one-step price volatility.
fn random_walk_interval(w: &Window<'_>, path: &[f64], coverage: f64) -> Result<Interval> {
    let z = coverage_z(coverage)?;
    let vol = if w.len() >= 2 { realized_volatility(w)? } else { 0.0 };
    let sigma = vol * w.last().close;
    let half: Vec<f64> = (1..=path.len()).map(|k| z * sigma * (k as f64).sqrt()).collect();
    Ok(Interval {
        lower: path.iter().zip(&half).map(|(p, h)| p - h).collect(),
        upper: path.iter().zip(&half).map(|(p, h)| p + h).collect(),
    })
}

/// Repeats the last close.
pub fn naive_forecast(w: &Window<'_>, horizon: usize, coverage: f64) -> Result<Forecast> {
    check_horizon(horizon)?;
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let path = vec![w.last().close; horizon];
    let interval = random_walk_interval(w, &path, coverage)?;
    Forecast::new(w.last_index(), path, Some(interval))
}

/// Extends the last close by the mean one-step change of the window.
pub fn drift_forecast(w: &Window<'_>, horizon: usize, coverage: f64) -> Result<Forecast> {
    check_horizon(horizon)?;
    if w.len() < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: w.len(),
        });
    }
    let candles = w.candles();
    let last = w.last().close;
    let drift = (last - candles[0].close) / (candles.len() - 1) as f64;
    let path: Vec<f64> = (1..=horizon).map(|k| last + k as f64 * drift).collect();
    let interval = random_walk_interval(w, &path, coverage)?;
    Forecast::new(w.last_index(), path, Some(interval))
}

/// Least-squares line through the window's closes, extrapolated. The band
/// is a flat `± z·s` with `s` the residual standard deviation.
pub fn linreg_forecast(w: &Window<'_>, horizon: usize, coverage: f64) -> Result<Forecast> {
    check_horizon(horizon)?;
    if w.len() < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: w.len(),
        });
    }
    let closes = w.closes();
    let (slope, intercept) = least_squares(&closes);
    let n = closes.len();
    let path: Vec<f64> = (0..horizon)
        .map(|k| intercept + slope * (n + k) as f64)
        .collect();
    let resid_sd = if n > 2 {
        let ss: f64 = closes
            .iter()
            .enumerate()
            .map(|(i, y)| (y - (intercept + slope * i as f64)).powi(2))
            .sum();
        (ss / (n - 2) as f64).sqrt()
    } else {
        0.0
    };
    let half = coverage_z(coverage)? * resid_sd;
    let interval = Interval {
        lower: path.iter().map(|p| p - half).collect(),
        upper: path.iter().map(|p| p + half).collect(),
    };
    Forecast::new(w.last_index(), path, Some(interval))
}

/// Something that produces a forecast from the window ending at the origin.
pub trait Forecaster {
    fn label(&self) -> String;

    fn forecast(&self, w: &Window<'_>, horizon: usize) -> Result<Forecast>;

    /// Whether a forecast is available for this origin. Baselines always
    /// have one; imported predictions only exist where the file has rows.
    fn has_origin(&self, _w: &Window<'_>) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Naive,
    Drift,
    Linreg,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(BaselineKind::Naive),
            "drift" => Ok(BaselineKind::Drift),
            "linreg" => Ok(BaselineKind::Linreg),
            other => Err(Error::InvalidParameter(format!("unknown forecaster `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub coverage: f64,
}

impl Baseline {
    pub fn new(kind: BaselineKind) -> Self {
        Self {
            kind,
            coverage: ONE_SIGMA_COVERAGE,
        }
    }
}

impl Forecaster for Baseline {
    fn label(&self) -> String {
        match self.kind {
            BaselineKind::Naive => "naive",
            BaselineKind::Drift => "drift",
            BaselineKind::Linreg => "linreg",
        }
        .to_string()
    }

    fn forecast(&self, w: &Window<'_>, horizon: usize) -> Result<Forecast> {
        match self.kind {
            BaselineKind::Naive => naive_forecast(w, horizon, self.coverage),
            BaselineKind::Drift => drift_forecast(w, horizon, self.coverage),
            BaselineKind::Linreg => linreg_forecast(w, horizon, self.coverage),
        }
    }
}

/// Parses the external forecast CSV and joins each origin onto `series` by
/// exact timestamp. Rows for one origin must be contiguous, with steps
/// `1..=h` in order; origins must appear in increasing time order.
pub fn load_external_forecasts(text: &str, series: &Series) -> Result<Vec<(i64, Forecast)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptyInput),
        Some(r) => r.map_err(|e| Error::ExternalForecast(e.to_string()))?,
    };
    let header = header.iter().collect::<Vec<_>>().join(",");
    let with_bounds = match header.as_str() {
        EXTERNAL_HEADER => true,
        EXTERNAL_HEADER_SHORT => false,
        _ => {
            return Err(Error::BadHeader {
                expected: EXTERNAL_HEADER.to_string(),
                found: header,
            })
        }
    };
    let width = if with_bounds { 5 } else { 3 };

    struct Group {
        origin: i64,
        path: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    }
    let mut groups: Vec<Group> = Vec::new();

    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let (origin, _) = parse_timestamp(&rec[0]).map_err(|message| Error::Parse { row, message })?;
        let step: usize = rec[1].parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad step `{}`", &rec[1]),
        })?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric value `{}`", &rec[k]),
            })
        };
        let predicted = num(2)?;
        let origin_label = &rec[0];

        let start_new = groups.last().is_none_or(|g| g.origin != origin);
        if start_new {
            if let Some(prev) = groups.last() {
                if origin <= prev.origin {
                    return Err(Error::ExternalForecast(format!(
                        "origin {origin_label} out of order at row {row}"
                    )));
                }
            }
            groups.push(Group {
                origin,
                path: Vec::new(),
                lower: Vec::new(),
                upper: Vec::new(),
            });
        }
        let g = groups.last_mut().expect("group just ensured");
        if step != g.path.len() + 1 {
            return Err(Error::ExternalForecast(format!(
                "origin {origin_label}: expected step {}, found {step}",
                g.path.len() + 1
            )));
        }
        g.path.push(predicted);
        if with_bounds {
            g.lower.push(num(3)?);
            g.upper.push(num(4)?);
        }
    }

    groups
        .into_iter()
        .map(|g| {
            let index = series.index_of(g.origin).ok_or_else(|| {
                Error::ExternalForecast(format!(
                    "origin {} not in series",
                    series.format_timestamp(g.origin)
                ))
            })?;
            let interval = with_bounds.then_some(Interval {
                lower: g.lower,
                upper: g.upper,
            });
            Ok((g.origin, Forecast::new(index, g.path, interval)?))
        })
        .collect()
}

/// Writes forecasts in the external CSV layout. Bounds columns are emitted
/// only when every forecast carries an interval.
pub fn write_external_forecasts(forecasts: &[(i64, Forecast)], series: &Series) -> String {
    let with_bounds = !forecasts.is_empty() && forecasts.iter().all(|(_, f)| f.interval.is_some());
    let mut out = String::new();
    out.push_str(if with_bounds { EXTERNAL_HEADER } else { EXTERNAL_HEADER_SHORT });
    out.push('\n');
    for (origin, f) in forecasts {
        let ts = series.format_timestamp(*origin);
        for (k, p) in f.path.iter().enumerate() {
            match (&f.interval, with_bounds) {
                (Some(iv), true) => out.push_str(&format!(
                    "{ts},{},{p},{},{}\n",
                    k + 1,
                    iv.lower[k],
                    iv.upper[k]
                )),
                _ => out.push_str(&format!("{ts},{},{p}\n", k + 1)),
            }
        }
    }
    out
}

/// Replays imported predictions keyed by origin timestamp.
#[derive(Debug, Clone)]
pub struct ExternalForecaster {
    label: String,
    by_origin: HashMap<i64, Forecast>,
}

impl ExternalForecaster {
    pub fn new(label: impl Into<String>, forecasts: Vec<(i64, Forecast)>) -> Self {
        Self {
            label: label.into(),
            by_origin: forecasts.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.by_origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_origin.is_empty()
    }
}

impl Forecaster for ExternalForecaster {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn forecast(&self, w: &Window<'_>, horizon: usize) -> Result<Forecast> {
        let ts = w.last().timestamp;
        let f = self.by_origin.get(&ts).ok_or_else(|| {
            Error::ExternalForecast(format!(
                "no forecast for origin {}",
                w.series().format_timestamp(ts)
            ))
        })?;
        if f.horizon() != horizon {
            return Err(Error::ExternalForecast(format!(
                "origin {} has horizon {}, expected {horizon}",
                w.series().format_timestamp(ts),
                f.horizon()
            )));
        }
        Ok(f.clone())
    }

    fn has_origin(&self, w: &Window<'_>) -> bool {
        self.by_origin.contains_key(&w.last().timestamp)
    }
}
