//! Float formatting shared by every CSV and JSON artifact.

/// Rounds to 9 significant digits.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("exponent format always parses")
}

/// Shortest decimal that round-trips the 9-significant-digit value.
///
/// Rust's float printing is platform independent, so the output is
/// byte-stable. Magnitudes outside [1e-6, 1e15) switch to exponent form.
pub fn sig9(x: f64) -> String {
    let r = round9(x);
    if r.is_nan() {
        return "NaN".into();
    }
    if r.is_infinite() {
        return if r > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = r.abs();
    if a != 0.0 && !(1e-6..1e15).contains(&a) {
        format!("{r:e}")
    } else if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(0.1 + 0.2), "0.3");
        assert_eq!(sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(sig9(123456789012.0), "123456789000");
        assert_eq!(sig9(-2.5e-9), "-2.5e-9");
        assert_eq!(sig9(-0.0), "0");
        assert_eq!(sig9(0.785714285714), "0.785714286");
    }

    #[test]
    fn printed_value_parses_to_rounded_value() {
        for x in [0.1234567891234, 98765.4321987, 1e-7 / 3.0, 7e20 / 3.0] {
            let back: f64 = sig9(x).parse().unwrap();
            assert_eq!(back, round9(x));
        }
    }
}
