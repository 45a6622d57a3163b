//! OHLCV series: CSV parsing, validation, windowing and returns.

use std::io::Read;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact CSV header for OHLCV input and output.
pub const CSV_HEADER: &str = "timestamp,open,high,low,close,volume";

/// How timestamps were written in the source file. Kept so that a series
/// serializes back in the form it was read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    /// ISO-8601 calendar date, `YYYY-MM-DD`, midnight UTC.
    Date,
    /// Integer seconds since the Unix epoch.
    Epoch,
}

/// One OHLCV bar. `timestamp` is epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Candle {
    pub fn new(timestamp: i64, open: f64, high: f64, low: f64, close: f64, volume: f64) -> Self {
        Self {
            timestamp,
            open,
            high,
            low,
            close,
            volume,
        }
    }

    /// Returns the name of the first violated invariant, if any.
    pub fn violated_invariant(&self) -> Option<&'static str> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite()) || !self.volume.is_finite() {
            return Some("finite values");
        }
        if prices.iter().any(|&p| p <= 0.0) {
            return Some("all prices > 0");
        }
        if self.low > self.high {
            return Some("low ≤ high");
        }
        if self.low > self.open.min(self.close) {
            return Some("low ≤ min(open, close)");
        }
        if self.high < self.open.max(self.close) {
            return Some("high ≥ max(open, close)");
        }
        if self.volume < 0.0 {
            return Some("volume ≥ 0");
        }
        None
    }
}

/// An ordered run of candles for one symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    symbol: String,
    candles: Vec<Candle>,
    timestamp_format: TimestampFormat,
}

impl Series {
    /// Builds a series without checking invariants; pass it through
    /// [`validate`] before use.
    pub fn new(symbol: impl Into<String>, candles: Vec<Candle>, timestamp_format: TimestampFormat) -> Self {
        Self {
            symbol: symbol.into(),
            candles,
            timestamp_format,
        }
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn timestamp_format(&self) -> TimestampFormat {
        self.timestamp_format
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn close(&self, index: usize) -> Result<f64> {
        self.candles
            .get(index)
            .map(|c| c.close)
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.len(),
            })
    }

    /// Index of the candle with exactly this timestamp.
    pub fn index_of(&self, timestamp: i64) -> Option<usize> {
        self.candles
            .binary_search_by_key(&timestamp, |c| c.timestamp)
            .ok()
    }

    /// Window over `[start, end)`.
    pub fn window(&self, start: usize, end: usize) -> Result<Window<'_>> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidWindow {
                start,
                end,
                len: self.len(),
            });
        }
        Ok(Window {
            series: self,
            start,
            end,
        })
    }

    /// The whole series as one window.
    pub fn full_window(&self) -> Result<Window<'_>> {
        self.window(0, self.len())
    }

    /// The `len` candles ending at (and including) `last_index`.
    pub fn window_ending_at(&self, last_index: usize, len: usize) -> Result<Window<'_>> {
        if len == 0 || last_index >= self.len() {
            return Err(Error::InvalidWindow {
                start: (last_index + 1).saturating_sub(len),
                end: last_index + 1,
                len: self.len(),
            });
        }
        if len > last_index + 1 {
            return Err(Error::InsufficientHistory {
                required: len,
                actual: last_index + 1,
            });
        }
        self.window(last_index + 1 - len, last_index + 1)
    }

    pub fn format_timestamp(&self, timestamp: i64) -> String {
        format_timestamp(timestamp, self.timestamp_format)
    }

    /// Serializes to CSV with the canonical header and LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for c in &self.candles {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.format_timestamp(c.timestamp),
                c.open,
                c.high,
                c.low,
                c.close,
                c.volume
            ));
        }
        out
    }
}

/// A contiguous slice `[start, end)` of a series.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    series: &'a Series,
    start: usize,
    end: usize,
}

impl<'a> Window<'a> {
    pub fn series(&self) -> &'a Series {
        self.series
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn candles(&self) -> &'a [Candle] {
        &self.series.candles[self.start..self.end]
    }

    /// The candle under consideration: the window's most recent bar.
    pub fn last(&self) -> &'a Candle {
        &self.series.candles[self.end - 1]
    }

    /// Series index of the last candle.
    pub fn last_index(&self) -> usize {
        self.end - 1
    }

    pub fn closes(&self) -> Vec<f64> {
        self.candles().iter().map(|c| c.close).collect()
    }

    /// The trailing `len` candles of this window.
    pub fn trailing(&self, len: usize) -> Result<Window<'a>> {
        if len > self.len() {
            return Err(Error::InsufficientHistory {
                required: len,
                actual: self.len(),
            });
        }
        self.series.window(self.end - len, self.end)
    }
}

/// Parses `YYYY-MM-DD` or integer epoch seconds.
pub fn parse_timestamp(field: &str) -> std::result::Result<(i64, TimestampFormat), String> {
    if let Ok(secs) = field.parse::<i64>() {
        return Ok((secs, TimestampFormat::Epoch));
    }
    let date = NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .map_err(|_| format!("unrecognised timestamp `{field}`"))?;
    let secs = date
        .and_hms_opt(0, 0, 0)
        .expect("midnight is always valid")
        .and_utc()
        .timestamp();
    Ok((secs, TimestampFormat::Date))
}

pub fn format_timestamp(timestamp: i64, format: TimestampFormat) -> String {
    match format {
        TimestampFormat::Epoch => timestamp.to_string(),
        TimestampFormat::Date => match DateTime::from_timestamp(timestamp, 0) {
            Some(dt) => dt.date_naive().format("%Y-%m-%d").to_string(),
            None => timestamp.to_string(),
        },
    }
}

/// Parses header-first OHLCV CSV. Row numbers in errors are 1-based data
/// rows (the header is row 0). Each candle is checked as it is read; the
/// ordering of timestamps is checked by [`validate`].
pub fn parse_csv<R: Read>(reader: R, symbol: &str) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(Error::EmptyInput),
        Some(r) => r.map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?,
    };
    let found = header.iter().collect::<Vec<_>>().join(",");
    if found != CSV_HEADER {
        return Err(Error::BadHeader {
            expected: CSV_HEADER.to_string(),
            found,
        });
    }

    let mut candles = Vec::new();
    let mut format = None;
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != 6 {
            return Err(Error::Parse {
                row,
                message: format!("expected 6 fields, found {}", rec.len()),
            });
        }
        let (timestamp, fmt) = parse_timestamp(&rec[0]).map_err(|message| Error::Parse { row, message })?;
        match format {
            None => format = Some(fmt),
            Some(f) if f != fmt => {
                return Err(Error::Parse {
                    row,
                    message: "timestamp format differs from earlier rows".into(),
                })
            }
            _ => {}
        }
        let mut nums = [0.0f64; 5];
        for (k, name) in ["open", "high", "low", "close", "volume"].iter().enumerate() {
            let field = &rec[k + 1];
            nums[k] = field.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric {name} `{field}`"),
            })?;
        }
        let candle = Candle::new(timestamp, nums[0], nums[1], nums[2], nums[3], nums[4]);
        if let Some(invariant) = candle.violated_invariant() {
            return Err(Error::Validation {
                index: row - 1,
                invariant: invariant.to_string(),
            });
        }
        candles.push(candle);
    }

    if candles.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Series::new(
        symbol,
        candles,
        format.unwrap_or(TimestampFormat::Epoch),
    ))
}

pub fn parse_csv_str(text: &str, symbol: &str) -> Result<Series> {
    parse_csv(text.as_bytes(), symbol)
}

/// Checks every candle invariant and strict timestamp ordering. Returns the
/// series unchanged on success.
pub fn validate(series: Series) -> Result<Series> {
    if series.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (index, c) in series.candles.iter().enumerate() {
        if let Some(invariant) = c.violated_invariant() {
            return Err(Error::Validation {
                index,
                invariant: invariant.to_string(),
            });
        }
        if index > 0 && c.timestamp <= series.candles[index - 1].timestamp {
            return Err(Error::Validation {
                index,
                invariant: "timestamps strictly increasing".to_string(),
            });
        }
    }
    Ok(series)
}

/// Fractional change in close from index `i` to index `j`.
pub fn pct_return(series: &Series, i: usize, j: usize) -> Result<f64> {
    let from = series.close(i)?;
    let to = series.close(j)?;
    if i >= j {
        return Err(Error::InvalidParameter(format!(
            "return span requires i < j, got i={i}, j={j}"
        )));
    }
    Ok((to - from) / from)
}
