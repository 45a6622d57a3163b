#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use veto_core::{Candle, Series, TimestampFormat};

pub fn fixture(name: &str) -> String {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// Random 90-candle window. About a third of the time the last candle is
/// pushed toward a bottoming-tail shape so that every predicate sees both
/// outcomes.
pub fn random_window(rng: &mut ChaCha8Rng, len: usize) -> Series {
    let mut close: f64 = rng.gen_range(20.0..500.0);
    let mut candles = Vec::with_capacity(len);
    for i in 0..len {
        let open = close;
        close *= 1.0 + rng.gen_range(-0.03..0.03);
        let hi = open.max(close) * (1.0 + rng.gen_range(0.0..0.02));
        let lo = open.min(close) * (1.0 - rng.gen_range(0.0..0.02));
        let vol = rng.gen_range(100.0..10_000.0f64).round();
        candles.push(Candle::new(i as i64 * 86_400, open, hi, lo, close, vol));
    }
    if rng.gen_bool(0.35) {
        let min_low = candles.iter().map(|c| c.low).fold(f64::INFINITY, f64::min);
        let max_range = candles.iter().map(|c| c.high - c.low).fold(0.0, f64::max);
        let max_vol = candles.iter().map(|c| c.volume).fold(0.0, f64::max);
        let low = min_low * rng.gen_range(0.97..1.01);
        let range = max_range * rng.gen_range(0.3..1.5);
        let high = low + range;
        let a = rng.gen_range(0.3..1.0);
        let b = rng.gen_range(0.3..1.0);
        let (o, c) = (low + a * range, low + b * range);
        let vol = max_vol * rng.gen_range(0.7..1.3);
        let last = candles.last_mut().unwrap();
        *last = Candle::new(last.timestamp, o, high, low, c, vol);
    }
    Series::new("RND", candles, TimestampFormat::Epoch)
}

/// Independent check of the six bottoming-tail criteria on the last candle
/// of `candles`, using integer counting for the percentile tests.
pub fn bottoming_tail_oracle(candles: &[Candle]) -> [bool; 6] {
    let n = candles.len();
    let last = candles[n - 1];
    let range = last.high - last.low;

    let lowest = candles.iter().all(|c| last.low <= c.low);

    let not_larger = candles.iter().filter(|c| c.high - c.low <= range).count();
    let size_top70 = not_larger * 100 >= 30 * n;

    let not_louder = candles.iter().filter(|c| c.volume <= last.volume).count();
    let volume_top10 = not_louder * 100 >= 90 * n;

    let body_low = if last.open < last.close { last.open } else { last.close };
    let tail = range > 0.0 && body_low - last.low >= 0.5 * range;
    let body = range > 0.0 && body_low >= (last.high + last.low) / 2.0;
    let close = range > 0.0 && last.close >= last.high - 0.25 * range;

    [lowest, size_top70, volume_top10, tail, body, close]
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
