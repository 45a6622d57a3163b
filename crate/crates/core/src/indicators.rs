//! Window statistics, candle geometry, percentile ranks and trend lines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{Candle, Window};

/// Min, max and mean of the closes in a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Support,
    Resistance,
}

/// A straight line over a window's step axis. Step 0 is the first candle of
/// the window the line was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendLine {
    pub slope: f64,
    pub intercept: f64,
    pub kind: LineKind,
}

impl TrendLine {
    pub fn value_at(&self, step: f64) -> f64 {
        self.intercept + self.slope * step
    }

    /// Re-expresses the line so that `samples` unit steps span a window of
    /// `window_len` candles, first candle to last.
    pub fn spanning(&self, window_len: usize, samples: usize) -> TrendLine {
        let slope = if samples > 1 && window_len > 1 {
            self.slope * (window_len - 1) as f64 / (samples - 1) as f64
        } else {
            self.slope
        };
        TrendLine { slope, ..*self }
    }
}

/// Bar decomposition: `range = body + lower_tail + upper_tail`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandleGeometry {
    pub range: f64,
    pub body: f64,
    pub lower_tail: f64,
    pub upper_tail: f64,
}

pub fn window_stats(w: &Window<'_>) -> Result<WindowStats> {
    let candles = w.candles();
    if candles.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for c in candles {
        min = min.min(c.close);
        max = max.max(c.close);
        sum += c.close;
    }
    let mean = (sum / candles.len() as f64).clamp(min, max);
    Ok(WindowStats { min, max, mean })
}

/// Ordinary least-squares slope and intercept of `ys` against `0..n`.
pub(crate) fn least_squares(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, y_mean - slope * x_mean)
}

fn fit_envelope(w: &Window<'_>, kind: LineKind) -> Result<TrendLine> {
    if w.len() < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: w.len(),
        });
    }
    let ys: Vec<f64> = match kind {
        LineKind::Support => w.candles().iter().map(|c| c.low).collect(),
        LineKind::Resistance => w.candles().iter().map(|c| c.high).collect(),
    };
    let (slope, _) = least_squares(&ys);
    let offsets = ys.iter().enumerate().map(|(i, &y)| y - slope * i as f64);
    let intercept = match kind {
        LineKind::Support => offsets.fold(f64::INFINITY, f64::min),
        LineKind::Resistance => offsets.fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(TrendLine {
        slope,
        intercept,
        kind,
    })
}

/// Regression line through the lows, lowered until it touches the lowest one.
pub fn fit_support_line(w: &Window<'_>) -> Result<TrendLine> {
    fit_envelope(w, LineKind::Support)
}

/// Regression line through the highs, raised until it touches the highest one.
pub fn fit_resistance_line(w: &Window<'_>) -> Result<TrendLine> {
    fit_envelope(w, LineKind::Resistance)
}

pub fn sample_line(line: &TrendLine, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be ≥ 1".into()));
    }
    Ok((0..steps).map(|k| line.value_at(k as f64)).collect())
}

/// Fraction of `values` that are `≤ x`. A value is "in the top q" of the
/// set when its rank is at least `1 - q`.
pub fn percentile_rank(values: &[f64], x: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let below = values.iter().filter(|&&v| v <= x).count();
    Ok(below as f64 / values.len() as f64)
}

pub fn candle_geometry(c: &Candle) -> CandleGeometry {
    let body_low = c.open.min(c.close);
    let body_high = c.open.max(c.close);
    CandleGeometry {
        range: c.high - c.low,
        body: body_high - body_low,
        lower_tail: body_low - c.low,
        upper_tail: c.high - body_high,
    }
}

/// One-step simple returns of a close sequence.
pub fn simple_returns(closes: &[f64]) -> Vec<f64> {
    closes.windows(2).map(|p| (p[1] - p[0]) / p[0]).collect()
}

/// Sample standard deviation of one-step close-to-close returns. A window of
/// two candles has a single return and reports zero.
pub fn realized_volatility(w: &Window<'_>) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: w.len(),
        });
    }
    let returns = simple_returns(&w.closes());
    if returns.len() < 2 {
        return Ok(0.0);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let ss: f64 = returns.iter().map(|r| (r - mean).powi(2)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}
