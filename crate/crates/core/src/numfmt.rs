/// Fixed-precision formatting with trailing zeros (and a bare trailing
/// point) removed. Exact binary ties round half to even.
pub fn trim_fixed(value: f64, decimals: usize) -> String {
    let mut s = format!("{value:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}
