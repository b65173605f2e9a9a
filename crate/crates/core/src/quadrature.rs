//! Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
//!
//! The interval is first cut at caller-supplied breakpoints (kinks, density
//! peaks), then the segment with the largest error estimate is bisected until
//! the summed error estimate drops below the tolerance or the subdivision
//! budget is spent.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

// 15-point Kronrod abscissae (positive half, descending) and weights; the
// odd-indexed abscissae are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-8, rel_tol: 0.0, max_subdivisions: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not reach tolerance after {subdivisions} subdivisions (estimate {value}, error {abs_error:e})")]
    NonConvergence { value: f64, abs_error: f64, subdivisions: usize },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("invalid integration interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment, QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<f64, QuadError> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite(x))
        }
    };

    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.abs() * WGK[7];
    let mut fv = [(0.0, 0.0); 7];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let (f1, f2) = (eval(center - dx)?, eval(center + dx)?);
        fv[j] = (f1, f2);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }

    let value = kronrod * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment { a, b, value, error })
}

/// ∫ₐᵇ f(x) dx. Breakpoints outside (a, b) are ignored.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadError> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadError::InvalidInterval(a, b));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, abs_error: 0.0, subdivisions: 0 });
    }

    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    for w in cuts.windows(2) {
        heap.push(gk15(&f, w[0], w[1])?);
    }
    let mut subdivisions = 0;
    loop {
        let value: f64 = heap.iter().map(|s| s.value).sum();
        let abs_error: f64 = heap.iter().map(|s| s.error).sum();
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if abs_error <= tol {
            return Ok(QuadResult { value, abs_error, subdivisions });
        }
        if subdivisions >= cfg.max_subdivisions {
            return Err(QuadError::NonConvergence { value, abs_error, subdivisions });
        }
        let worst = heap.pop().expect("at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // segment is at floating-point resolution; its error cannot shrink
            return Err(QuadError::NonConvergence { value, abs_error, subdivisions });
        }
        heap.push(gk15(&f, worst.a, mid)?);
        heap.push(gk15(&f, mid, worst.b)?);
        subdivisions += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        let k: f64 = WGK[7] + 2.0 * WGK[..7].iter().sum::<f64>();
        let g: f64 = WG[3] + 2.0 * WG[..3].iter().sum::<f64>();
        assert!((k - 2.0).abs() < 1e-15);
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rules_are_exact_for_their_degrees() {
        // Kronrod-15 integrates x^22 exactly, Gauss-7 integrates x^12 exactly.
        for deg in [2, 8, 12, 22] {
            let seg = gk15(&|x: f64| x.powi(deg), -1.0, 1.0).unwrap();
            let exact = 2.0 / (deg as f64 + 1.0);
            assert!((seg.value - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn smooth_integrals() {
        let cfg = QuadConfig::default();
        let r = integrate(f64::sin, &[], 0.0, std::f64::consts::PI, &cfg).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate(|x: f64| (-x * x).exp(), &[], -10.0, 10.0, &cfg).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn kinks_and_breakpoints() {
        let cfg = QuadConfig { abs_tol: 1e-12, ..Default::default() };
        let r = integrate(|x: f64| (x - 0.3).abs(), &[0.3], 0.0, 1.0, &cfg).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-13);
        assert_eq!(r.subdivisions, 0);
        // a narrow spike that only breakpoint hints make visible
        let spike = |x: f64| (-(x - 0.737).powi(2) / 2e-8).exp();
        let hints: Vec<f64> = [-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0].iter().map(|k| 0.737 + k * 1e-4).collect();
        let r = integrate(spike, &hints, 0.0, 1.0, &cfg).unwrap();
        let exact = (2.0 * std::f64::consts::PI * 1e-8).sqrt();
        assert!((r.value - exact).abs() < 1e-10);
    }

    #[test]
    fn empty_and_invalid_intervals() {
        let cfg = QuadConfig::default();
        assert_eq!(integrate(|x| x, &[], 1.0, 1.0, &cfg).unwrap().value, 0.0);
        assert!(matches!(integrate(|x| x, &[], 2.0, 1.0, &cfg), Err(QuadError::InvalidInterval(..))));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cfg = QuadConfig { abs_tol: 1e-14, rel_tol: 0.0, max_subdivisions: 3 };
        let err = integrate(|x: f64| 1.0 / x.sqrt(), &[], 1e-300, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, QuadError::NonConvergence { subdivisions: 3, .. }));
    }

    #[test]
    fn non_finite_integrand() {
        let cfg = QuadConfig::default();
        assert!(matches!(integrate(|_| f64::NAN, &[], 0.0, 1.0, &cfg), Err(QuadError::NonFinite(_))));
    }
}
