//! Writes a regime-switching OHLCV series as CSV to stdout.
//!
//! `cargo run -p veto-core --example regime_fixture -- [segment_len] [cycles] [seed]`

use veto_core::synthetic::{regime_series, RegimeSpec};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let mut spec = RegimeSpec::default();
    if let Some(&n) = args.first() {
        spec.segment_len = n as usize;
    }
    if let Some(&c) = args.get(1) {
        spec.cycles = c as usize;
    }
    if let Some(&s) = args.get(2) {
        spec.seed = s;
    }
    print!("{}", regime_series(&spec).to_csv());
}
