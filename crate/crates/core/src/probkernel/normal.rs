//! Standard normal density, distribution and quantile functions.
//!
//! `erfc` comes from `libm` (port of the musl implementation, about 1 ulp).
//! The quantile starts from `statrs`' inverse erfc and is polished with
//! Halley steps against that `erfc`. Tail probabilities are always computed
//! on the side where they do not cancel.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// 1 / sqrt(2π)
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// φ(x).
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x). Saturates to exactly 0 or 1 far in the tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x) without cancellation for large positive `x`.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Φ⁻¹(p) for p in (0, 1). Returns ±∞ at the endpoints.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        // residual on the tail that holds p's precision
        let r = if x <= 0.0 { std_normal_cdf(x) - p } else { (1.0 - p) - std_normal_sf(x) };
        let pdf = std_normal_pdf(x);
        if pdf == 0.0 || r == 0.0 {
            break;
        }
        let u = r / pdf;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Φ(b) − Φ(a) for a ≤ b, evaluated in whichever tail keeps full precision.
pub fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let mass = if a >= 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else if b <= 0.0 {
        std_normal_cdf(b) - std_normal_cdf(a)
    } else {
        1.0 - std_normal_cdf(a) - std_normal_sf(b)
    };
    mass.max(0.0)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    // Reference values from a 40-digit mpmath evaluation of ncdf.
    const PHI_REFERENCE: &[(f64, f64)] = &[
        (-37.0, 5.725_571_222_524_577e-300),
        (-30.0, 4.906_713_927_148_187e-198),
        (-10.0, 7.619_853_024_160_526e-24),
        (-5.0, 2.866_515_718_791_939e-7),
        (-1.5, 0.066_807_201_268_858_07),
        (-1.0, 0.158_655_253_931_457_05),
        (-0.3, 0.382_088_577_811_047_37),
        (0.0, 0.5),
        (0.7, 0.758_036_347_776_927),
        (1.0, 0.841_344_746_068_542_9),
        (2.5, 0.993_790_334_674_223_9),
        (3.0, 0.998_650_101_968_369_9),
        (8.0, 0.999_999_999_999_999_4),
    ];

    #[test]
    fn cdf_matches_high_precision_reference() {
        for &(x, expected) in PHI_REFERENCE {
            let got = std_normal_cdf(x);
            assert!((got - expected).abs() <= 1e-12, "Phi({x}) = {got}, want {expected}");
            if expected < 1e-3 {
                assert!(((got - expected) / expected).abs() < 1e-12, "relative tail error at {x}");
            }
        }
    }

    #[test]
    fn cdf_at_upper_975_quantile() {
        // mpmath: Phi(1.959964) = 0.97500000090355759570
        let got = std_normal_cdf(1.959964);
        assert!((got - 0.975_000_000_903_557_6).abs() < 1e-12);
        assert!((got - 0.975).abs() < 1e-8);
    }

    #[test]
    fn cdf_symmetry() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        let x = 0.7;
        assert!((std_normal_cdf(-x) - (1.0 - std_normal_cdf(x))).abs() < 1e-15);
        assert!((std_normal_sf(x) - std_normal_cdf(-x)).abs() < 1e-16);
    }

    #[test]
    fn cdf_monotone_on_grid() {
        let mut prev = 0.0;
        for i in -4000..=4000 {
            let v = std_normal_cdf(i as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-12, 1e-3, 0.025, 0.3, 0.5, 0.7, 0.975, 1.0 - 1e-9] {
            let x = std_normal_quantile(p);
            assert!(((std_normal_cdf(x) - p) / p).abs() < 1e-12, "p={p} x={x}");
        }
        assert!((std_normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn mass_is_precise_in_both_tails() {
        let upper = std_normal_mass(8.0, 9.0);
        let expected = std_normal_sf(8.0) - std_normal_sf(9.0);
        assert!(upper > 0.0 && (upper - expected).abs() / expected < 1e-14);
        let lower = std_normal_mass(-9.0, -8.0);
        assert!((lower - upper).abs() / upper < 1e-14);
        assert!((std_normal_mass(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-14);
        assert_eq!(std_normal_mass(1.0, 1.0), 0.0);
    }
}
