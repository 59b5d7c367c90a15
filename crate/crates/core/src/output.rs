//! Shared formatting for emitted tables.

/// Significant digits of every number written to CSV.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Format `value` with [`SIGNIFICANT_DIGITS`] significant digits.
pub fn fmt_sig(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_to_twelve_digits(v in -1e6f64..1e6) {
            let back: f64 = fmt_sig(v).parse().unwrap();
            prop_assert!((back - v).abs() <= 1e-11 * v.abs());
        }
    }

    #[test]
    fn zero_is_plain() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
    }
}
