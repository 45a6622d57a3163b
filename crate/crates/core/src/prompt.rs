//! Structured text prefix describing a price window: domain notes,
//! instructions, statistics and sampled support/resistance lines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{sample_line, window_stats, TrendLine};
use crate::market_data::Window;
use crate::numfmt::trim_fixed;

pub const DEFAULT_DOMAIN: &str = "The bitcoin price is a highly volatile price chart which is globally \
on an upward trend although it oscillates between bull and bear market cycles that last around 1 to 2 \
years. Each data point indicates the OHLC price of Bitcoin as well as the volume.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub asset: String,
    pub domain: String,
    pub lookback: usize,
    pub horizon: usize,
    /// Points sampled along each trend line, spread from the first to the
    /// last candle of the window.
    pub line_samples: usize,
    pub stats_decimals: usize,
    pub line_decimals: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            asset: "Bitcoin".to_string(),
            domain: DEFAULT_DOMAIN.to_string(),
            lookback: 110,
            horizon: 7,
            line_samples: 6,
            stats_decimals: 1,
            line_decimals: 2,
        }
    }
}

impl PromptConfig {
    fn check(&self) -> Result<()> {
        if self.lookback == 0 || self.horizon == 0 || self.line_samples == 0 {
            return Err(Error::InvalidParameter(
                "lookback, horizon and line samples must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

fn bracketed(values: &[f64], decimals: usize) -> String {
    let parts: Vec<String> = values.iter().map(|v| trim_fixed(*v, decimals)).collect();
    format!("[{}]", parts.join(" "))
}

/// Renders the prefix. `support` and `resistance` must have been fitted on
/// `w`; they are resampled so the sampled points span the whole window.
pub fn build_prompt(
    w: &Window<'_>,
    support: &TrendLine,
    resistance: &TrendLine,
    cfg: &PromptConfig,
) -> Result<String> {
    cfg.check()?;
    let stats = window_stats(w)?;
    let sup = sample_line(&support.spanning(w.len(), cfg.line_samples), cfg.line_samples)?;
    let res = sample_line(&resistance.spanning(w.len(), cfg.line_samples), cfg.line_samples)?;
    let asset = &cfg.asset;
    let sd = cfg.stats_decimals;

    let mut out = String::new();
    out.push_str(&format!("This dataset is the {asset} daily price chart.\n"));
    out.push_str("Below is the information about the input time series:\n\n");
    out.push_str(&format!("[Domain]: {}\n", cfg.domain));
    out.push_str(&format!(
        "[Instructions]: Predict the data for the next {} steps given the previous {} steps.\n\n",
        cfg.horizon, cfg.lookback
    ));
    out.push_str(&format!(
        "[Statistics]: The input has a minimum value of {} and a maximum value of {}, with an average value of {}.\n",
        trim_fixed(stats.min, sd),
        trim_fixed(stats.max, sd),
        trim_fixed(stats.mean, sd)
    ));
    out.push_str(&format!(
        "Your predictions should take into account the behaviour that {asset} prices tend to revert when approaching these support and resistance levels.\n\n"
    ));
    out.push_str(&format!(
        "1. Support Line: This sequence represents the lower boundary of the {asset} price range over the considered period. Here is the support line : {}. It is by definition a line.\n\n",
        bracketed(&sup, cfg.line_decimals)
    ));
    out.push_str(&format!(
        "2. Resistance Line: This sequence represents the upper boundary of the {asset} price range over the considered period. Here is the resistance line : {}. It is by definition a line.\n",
        bracketed(&res, cfg.line_decimals)
    ));
    Ok(out)
}
