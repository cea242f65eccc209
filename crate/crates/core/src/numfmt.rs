//! Stable text rendering of floating-point values for output files.

/// Significant digits used for every real number written to data files and reports.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Renders `x` rounded to 12 significant digits in plain decimal notation.
///
/// `+inf` renders as `inf`, `-inf` as `-inf`. Negative zero renders as `0`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("scientific rendering parses");
    format!("{rounded}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Parses the output of [`fmt_f64`], including the `inf` sentinel.
pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}
