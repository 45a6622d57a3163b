//! Prints the prompt prefix for the bundled BTC fixture.

use veto_core::{build_prompt, fit_resistance_line, fit_support_line, parse_csv_str, validate, PromptConfig};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/btc_daily_110.csv");
    let text = std::fs::read_to_string(path).expect("fixture present");
    let series = validate(parse_csv_str(&text, "BTC").expect("fixture parses")).expect("fixture valid");
    let w = series.full_window().expect("non-empty");
    let support = fit_support_line(&w).expect("fit");
    let resistance = fit_resistance_line(&w).expect("fit");
    print!("{}", build_prompt(&w, &support, &resistance, &PromptConfig::default()).expect("prompt"));
}
