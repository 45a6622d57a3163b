//! Seeded synthetic OHLCV generators for fixtures, tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market_data::{Candle, Series, TimestampFormat};

const DAY: i64 = 86_400;
const START: i64 = 1_577_836_800; // 2020-01-01

/// Alternating regimes: a steady trend (direction flips between trend
/// segments) followed by a high-volatility random chop, repeated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSpec {
    pub segment_len: usize,
    /// Number of trend + chop pairs.
    pub cycles: usize,
    /// Per-step fractional drift inside a trend segment.
    pub trend_step: f64,
    /// Per-step return noise inside a trend segment.
    pub trend_noise: f64,
    /// Per-step return noise inside a chop segment.
    pub chop_noise: f64,
    pub seed: u64,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        Self {
            segment_len: 400,
            cycles: 4,
            trend_step: 0.004,
            trend_noise: 0.0005,
            chop_noise: 0.02,
            seed: 42,
        }
    }
}

fn bar(rng: &mut ChaCha8Rng, timestamp: i64, open: f64, close: f64, wick: f64) -> Candle {
    let high = open.max(close) * (1.0 + wick * rng.gen::<f64>());
    let low = open.min(close) * (1.0 - wick * rng.gen::<f64>());
    let volume = (1_000_000.0 * (0.5 + rng.gen::<f64>())).round();
    Candle::new(timestamp, open, high, low, close, volume)
}

/// Regime-switching daily series with date timestamps.
pub fn regime_series(spec: &RegimeSpec) -> Series {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut candles = Vec::with_capacity(2 * spec.cycles * spec.segment_len);
    let mut close = 100.0;
    let mut t = START;
    for cycle in 0..spec.cycles {
        let dir = if cycle % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..spec.segment_len {
            let r = dir * spec.trend_step + spec.trend_noise * (2.0 * rng.gen::<f64>() - 1.0);
            let open = close;
            close *= 1.0 + r;
            candles.push(bar(&mut rng, t, open, close, spec.trend_noise));
            t += DAY;
        }
        let anchor = close;
        for _ in 0..spec.segment_len {
            // chop reverts toward the level it started from
            let pull = 0.2 * (anchor - close) / anchor;
            let r = pull + spec.chop_noise * (2.0 * rng.gen::<f64>() - 1.0);
            let open = close;
            close *= 1.0 + r;
            candles.push(bar(&mut rng, t, open, close, spec.chop_noise));
            t += DAY;
        }
    }
    Series::new("SYN", candles, TimestampFormat::Date)
}

/// Random-walk daily series.
pub fn random_walk(len: usize, volatility: f64, seed: u64) -> Series {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut close = 100.0;
    let candles = (0..len)
        .map(|i| {
            let open = close;
            close *= 1.0 + volatility * (2.0 * rng.gen::<f64>() - 1.0);
            bar(&mut rng, START + i as i64 * DAY, open, close, volatility)
        })
        .collect();
    Series::new("RW", candles, TimestampFormat::Date)
}

/// Random walk with a bottoming-tail candle planted at `index`: the
/// lowest low of the series so far, the widest range, the highest volume,
/// and a long lower wick with the body near the top.
pub fn planted_bottoming_tail(len: usize, index: usize, seed: u64) -> Series {
    let base = random_walk(len, 0.01, seed);
    let mut candles = base.candles().to_vec();
    let prior_low = candles[..index].iter().map(|c| c.low).fold(f64::INFINITY, f64::min);
    let max_range = candles.iter().map(|c| c.high - c.low).fold(0.0, f64::max);
    let max_volume = candles.iter().map(|c| c.volume).fold(0.0, f64::max);

    let range = 2.0 * max_range;
    let low = prior_low - 0.5 * max_range;
    let high = low + range;
    let open = low + 0.80 * range;
    let close = low + 0.92 * range;
    candles[index] = Candle::new(candles[index].timestamp, open, high, low, close, 2.0 * max_volume);
    // keep the neighbouring bar consistent with the planted close
    if index + 1 < len {
        let next = &mut candles[index + 1];
        next.open = close;
        next.high = next.high.max(close);
        next.low = next.low.min(close);
    }
    Series::new("PLT", candles, TimestampFormat::Date)
}
