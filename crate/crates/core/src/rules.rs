//! Symbolic candlestick rules: conjunctions of measurable predicates over
//! the most recent candle and its lookback window.
//!
//! Every predicate is always measured, so a verdict carries a complete
//! trace even when an early predicate already failed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{candle_geometry, percentile_rank};
use crate::market_data::Window;
use crate::numfmt::trim_fixed;

/// Name of the built-in bottoming-tail rule.
pub const BOTTOMING_TAIL: &str = "bottoming_tail_candle";

// Slack for comparing a percentile rank against `1 - q`, so that e.g.
// 27/90 counts as being in the top 70%.
const RANK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateKind {
    /// Candle low equals the lowest low of the lookback (ties pass).
    LowestInWindow,
    /// Candle range is in the top `threshold` fraction of lookback ranges.
    SizeTopPct,
    /// Candle volume is in the top `threshold` fraction of lookback volumes.
    VolumeTopPct,
    /// Lower tail is at least `threshold` of the range.
    TailMinFraction,
    /// Whole body lies in the upper `threshold` of the range.
    BodyUpperHalf,
    /// Close lies in the top `threshold` of the range.
    CloseTopFraction,
}

impl PredicateKind {
    fn takes_threshold(self) -> bool {
        !matches!(self, PredicateKind::LowestInWindow)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    name: String,
    kind: PredicateKind,
    threshold: Option<f64>,
    lookback: usize,
}

impl Predicate {
    pub fn new(
        name: impl Into<String>,
        kind: PredicateKind,
        threshold: Option<f64>,
        lookback: usize,
    ) -> Result<Self> {
        let name = name.into();
        if lookback == 0 {
            return Err(Error::InvalidParameter(format!("{name}: lookback must be ≥ 1")));
        }
        match (kind.takes_threshold(), threshold) {
            (true, Some(t)) if t > 0.0 && t <= 1.0 => {}
            (true, Some(t)) => {
                return Err(Error::InvalidParameter(format!(
                    "{name}: threshold {t} outside (0, 1]"
                )))
            }
            (true, None) => {
                return Err(Error::InvalidParameter(format!("{name}: threshold required")))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidParameter(format!("{name}: takes no threshold")))
            }
            (false, None) => {}
        }
        Ok(Self {
            name,
            kind,
            threshold,
            lookback,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> PredicateKind {
        self.kind
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    /// Measures the predicate on the last candle of `w`, which must hold at
    /// least `lookback` candles.
    pub fn measure(&self, w: &Window<'_>) -> Result<TraceEntry> {
        let span = w.trailing(self.lookback)?;
        let candle = span.last();
        let geo = candle_geometry(candle);
        let t = self.threshold.unwrap_or(1.0);

        let (measured, threshold, passed) = match self.kind {
            PredicateKind::LowestInWindow => {
                let min_low = span.candles().iter().map(|c| c.low).fold(f64::INFINITY, f64::min);
                (candle.low, min_low, candle.low <= min_low)
            }
            PredicateKind::SizeTopPct | PredicateKind::VolumeTopPct => {
                let pick = |c: &crate::market_data::Candle| match self.kind {
                    PredicateKind::SizeTopPct => c.high - c.low,
                    _ => c.volume,
                };
                let values: Vec<f64> = span.candles().iter().map(pick).collect();
                let rank = percentile_rank(&values, pick(candle))?;
                let cutoff = 1.0 - t;
                (rank, cutoff, rank + RANK_EPS >= cutoff)
            }
            PredicateKind::TailMinFraction => {
                let frac = if geo.range > 0.0 { geo.lower_tail / geo.range } else { 0.0 };
                (frac, t, geo.range > 0.0 && geo.lower_tail >= t * geo.range)
            }
            PredicateKind::BodyUpperHalf => {
                let body_low = candle.open.min(candle.close);
                let frac = if geo.range > 0.0 { (body_low - candle.low) / geo.range } else { 0.0 };
                (frac, 1.0 - t, geo.range > 0.0 && body_low >= candle.high - t * geo.range)
            }
            PredicateKind::CloseTopFraction => {
                let frac = if geo.range > 0.0 { (candle.close - candle.low) / geo.range } else { 0.0 };
                (frac, 1.0 - t, geo.range > 0.0 && candle.close >= candle.high - t * geo.range)
            }
        };
        Ok(TraceEntry {
            predicate: self.name.clone(),
            measured,
            threshold,
            passed,
        })
    }
}

/// A named conjunction of predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    name: String,
    predicates: Vec<Predicate>,
}

impl Rule {
    pub fn new(name: impl Into<String>, predicates: Vec<Predicate>) -> Result<Self> {
        let name = name.into();
        if predicates.is_empty() {
            return Err(Error::InvalidParameter(format!("rule {name} has no predicates")));
        }
        let mut seen = HashSet::new();
        for p in &predicates {
            if !seen.insert(p.name()) {
                return Err(Error::InvalidParameter(format!(
                    "rule {name}: duplicate predicate {}",
                    p.name()
                )));
            }
        }
        Ok(Self { name, predicates })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn max_lookback(&self) -> usize {
        self.predicates.iter().map(|p| p.lookback).max().unwrap_or(1)
    }
}

/// The bottoming-tail reversal candle over a 90-session lookback.
pub fn bottoming_tail_rule() -> Rule {
    const LOOKBACK: usize = 90;
    let p = |name: &str, kind, threshold| {
        Predicate::new(name, kind, threshold, LOOKBACK).expect("built-in predicate is valid")
    };
    Rule::new(
        BOTTOMING_TAIL,
        vec![
            p("lowest_candle_in_last_90_days", PredicateKind::LowestInWindow, None),
            p("candle_size_in_top_70%_of_last_90_candles", PredicateKind::SizeTopPct, Some(0.70)),
            p("candle_volume_in_top_10%_of_last_90_candles", PredicateKind::VolumeTopPct, Some(0.10)),
            p("tail_at_least_50%_of_entire_candle", PredicateKind::TailMinFraction, Some(0.50)),
            p("body_in_upper_50%_of_entire_candle", PredicateKind::BodyUpperHalf, Some(0.50)),
            p("closing_price_in_top_25%_of_entire_candle", PredicateKind::CloseTopFraction, Some(0.25)),
        ],
    )
    .expect("built-in rule is valid")
}

/// Looks up a built-in rule by name.
pub fn builtin_rule(name: &str) -> Result<Rule> {
    match name {
        BOTTOMING_TAIL | "bottoming_tail" => Ok(bottoming_tail_rule()),
        other => Err(Error::UnknownRule(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub predicate: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub rule: String,
    pub passed: bool,
    pub trace: Vec<TraceEntry>,
}

impl RuleVerdict {
    pub fn failed(&self) -> impl Iterator<Item = &TraceEntry> {
        self.trace.iter().filter(|e| !e.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

/// Evaluates `rule` on the last candle of `w`.
pub fn evaluate_rule(rule: &Rule, w: &Window<'_>) -> Result<RuleVerdict> {
    let required = rule.max_lookback();
    if w.len() < required {
        return Err(Error::InsufficientHistory {
            required,
            actual: w.len(),
        });
    }
    let trace = rule
        .predicates
        .iter()
        .map(|p| p.measure(w))
        .collect::<Result<Vec<_>>>()?;
    Ok(RuleVerdict {
        rule: rule.name.clone(),
        passed: trace.iter().all(|e| e.passed),
        trace,
    })
}

fn outcome(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// One line per predicate in trace order, then the rule outcome.
pub fn explain(verdict: &RuleVerdict) -> Vec<String> {
    let mut lines: Vec<String> = verdict
        .trace
        .iter()
        .map(|e| {
            format!(
                "{} {}: measured {} vs threshold {}",
                outcome(e.passed),
                e.predicate,
                trim_fixed(e.measured, 4),
                trim_fixed(e.threshold, 4)
            )
        })
        .collect();
    lines.push(format!("{}: {}", verdict.rule, outcome(verdict.passed)));
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{Candle, Series, TimestampFormat};

    pub(crate) fn planted_series(n: usize) -> Series {
        // quiet history: range 4, volume 1000, lows well above 90
        let mut candles: Vec<Candle> = (0..n - 1)
            .map(|i| {
                let base = 100.0 + (i % 5) as f64;
                Candle::new(i as i64 * 86_400, base + 1.0, base + 3.0, base - 1.0, base + 2.0, 1000.0)
            })
            .collect();
        candles.push(Candle::new((n as i64 - 1) * 86_400, 100.0, 104.0, 90.0, 103.0, 5000.0));
        Series::new("P", candles, TimestampFormat::Epoch)
    }

    #[test]
    fn builtin_structure() {
        let r = bottoming_tail_rule();
        assert_eq!(r.name(), "bottoming_tail_candle");
        assert_eq!(r.predicates().len(), 6);
        assert!(r.predicates().iter().all(|p| p.lookback() == 90));
        let t: Vec<_> = r.predicates().iter().map(|p| p.threshold()).collect();
        assert_eq!(t, vec![None, Some(0.70), Some(0.10), Some(0.50), Some(0.50), Some(0.25)]);
    }

    #[test]
    fn planted_candle_passes_all() {
        let s = planted_series(90);
        let v = evaluate_rule(&bottoming_tail_rule(), &s.full_window().unwrap()).unwrap();
        assert!(v.passed, "{:?}", explain(&v));
        assert_eq!(v.trace.len(), 6);
        assert!(v.trace.iter().all(|e| e.passed));
        // O=100 H=104 L=90 C=103
        assert_eq!(v.trace[3].measured, 10.0 / 14.0);
        assert_eq!(v.trace[4].measured, 10.0 / 14.0);
        assert_eq!(v.trace[5].measured, 13.0 / 14.0);
    }

    #[test]
    fn doji_fails_geometry() {
        let mut s = planted_series(90);
        let mut candles = s.candles().to_vec();
        let last = candles.last_mut().unwrap();
        *last = Candle::new(last.timestamp, 90.0, 90.0, 90.0, 90.0, 5000.0);
        s = Series::new("P", candles, TimestampFormat::Epoch);
        let v = evaluate_rule(&bottoming_tail_rule(), &s.full_window().unwrap()).unwrap();
        assert!(!v.passed);
        assert!(!v.trace[3].passed && !v.trace[4].passed && !v.trace[5].passed);
        assert_eq!(v.trace.len(), 6);
    }

    #[test]
    fn short_window_is_insufficient_history() {
        let s = planted_series(50);
        assert_eq!(
            evaluate_rule(&bottoming_tail_rule(), &s.full_window().unwrap()),
            Err(Error::InsufficientHistory { required: 90, actual: 50 })
        );
    }

    #[test]
    fn explain_format() {
        let s = planted_series(90);
        let v = evaluate_rule(&bottoming_tail_rule(), &s.full_window().unwrap()).unwrap();
        let lines = explain(&v);
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "PASS lowest_candle_in_last_90_days: measured 90 vs threshold 90");
        assert_eq!(lines[6], "bottoming_tail_candle: PASS");

        let mut failing = v.clone();
        failing.trace[2].passed = false;
        failing.passed = false;
        let lines = explain(&failing);
        assert!(lines[2].starts_with("FAIL candle_volume"));
        assert!(lines[6].ends_with("FAIL"));
    }

    #[test]
    fn verdict_json_key_order() {
        let v = RuleVerdict {
            rule: "r".into(),
            passed: false,
            trace: vec![TraceEntry { predicate: "p".into(), measured: 0.5, threshold: 0.9, passed: false }],
        };
        assert_eq!(
            v.to_json(),
            r#"{"rule":"r","passed":false,"trace":[{"predicate":"p","measured":0.5,"threshold":0.9,"passed":false}]}"#
        );
    }

    #[test]
    fn invalid_predicates() {
        assert!(Predicate::new("a", PredicateKind::SizeTopPct, Some(0.0), 5).is_err());
        assert!(Predicate::new("a", PredicateKind::SizeTopPct, Some(1.5), 5).is_err());
        assert!(Predicate::new("a", PredicateKind::SizeTopPct, None, 5).is_err());
        assert!(Predicate::new("a", PredicateKind::LowestInWindow, None, 0).is_err());
        let p = Predicate::new("a", PredicateKind::LowestInWindow, None, 3).unwrap();
        assert!(Rule::new("r", vec![p.clone(), p]).is_err());
        assert!(Rule::new("r", vec![]).is_err());
        assert!(builtin_rule("nope").is_err());
    }
}
