//! Monte Carlo estimators used as independent checks of the analytical
//! formulas.
//!
//! Trials run in fixed chunks of [`CHUNK`]; chunk `k` draws from stream `k`
//! of the seed, and success counts are summed, so the result does not depend
//! on thread count or scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probkernel::{BoundedDistribution, SimRng};
use crate::reliability::{DeviceModel, QosThreshold};
use crate::system::{Allocation, DevicePool};

pub const CHUNK: u64 = 65_536;
pub const MIN_SAMPLES: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("at least {MIN_SAMPLES} trials are required, got {0}")]
    TooFewSamples(u64),
    #[error("allocation has {got} fractions for a pool of {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("reliability must lie in [0, 1], got {0}")]
    InvalidReliability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub n_samples: u64,
    pub successes: u64,
    /// estimate ∓ 3·sqrt(p̂(1−p̂)/n), clipped to [0, 1].
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl McEstimate {
    fn from_counts(successes: u64, n: u64, seed: u64) -> Self {
        let p = successes as f64 / n as f64;
        let hw = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        Self { estimate: p, n_samples: n, successes, ci_lo: (p - hw).max(0.0), ci_hi: (p + hw).min(1.0), seed }
    }

    pub fn half_width(&self) -> f64 {
        3.0 * (self.estimate * (1.0 - self.estimate) / self.n_samples as f64).sqrt()
    }

    pub fn band_contains(&self, p: f64) -> bool {
        self.ci_lo <= p && p <= self.ci_hi
    }

    /// Standardized distance of the estimate from a hypothesized probability
    /// `p`, using the binomial standard deviation under `p` and a 1/(2n)
    /// continuity correction. Zero when p is 0 or 1 and matched exactly.
    pub fn z_score(&self, p: f64) -> f64 {
        let n = self.n_samples as f64;
        let gap = ((self.estimate - p).abs() - 0.5 / n).max(0.0);
        if gap == 0.0 {
            return 0.0;
        }
        let sd = (p * (1.0 - p) / n).sqrt();
        if sd == 0.0 {
            f64::INFINITY
        } else {
            gap / sd
        }
    }
}

/// How a pool's devices combine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Configuration {
    Series,
    Parallel,
    Partitioned { allocation: Allocation },
}

fn count_successes<F>(n: u64, seed: u64, trial: F) -> u64
where
    F: Fn(&mut SimRng) -> bool + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = SimRng::with_stream(seed, k);
            let m = CHUNK.min(n - k * CHUNK);
            (0..m).filter(|_| trial(&mut rng)).count() as u64
        })
        .sum()
}

fn check_n(n: u64) -> Result<(), McError> {
    if n < MIN_SAMPLES {
        Err(McError::TooFewSamples(n))
    } else {
        Ok(())
    }
}

fn device_meets(device: &DeviceModel, theta: f64, rng: &mut SimRng) -> bool {
    let c = device.capacity().sample_one(rng);
    let d = device.demand().sample_one(rng);
    c >= theta * d
}

/// Fraction of independent (C, Δ) draws with C/Δ ≥ Θ.
pub fn mc_single_reliability(device: &DeviceModel, theta: QosThreshold, n: u64, seed: u64) -> Result<McEstimate, McError> {
    check_n(n)?;
    let t = theta.value();
    Ok(McEstimate::from_counts(count_successes(n, seed, |rng| device_meets(device, t, rng)), n, seed))
}

/// Joint simulation: each trial draws every device's (C, Δ) pair and applies
/// the configuration's success predicate.
pub fn mc_system_reliability(
    pool: &DevicePool,
    configuration: &Configuration,
    theta: QosThreshold,
    n: u64,
    seed: u64,
) -> Result<McEstimate, McError> {
    check_n(n)?;
    let t = theta.value();
    let devices = pool.devices();
    let shares: Vec<f64> = match configuration {
        Configuration::Partitioned { allocation } => {
            if allocation.len() != devices.len() {
                return Err(McError::LengthMismatch { expected: devices.len(), got: allocation.len() });
            }
            allocation.fractions().iter().map(|a| a * t).collect()
        }
        _ => vec![t; devices.len()],
    };
    let any = matches!(configuration, Configuration::Parallel);
    let successes = count_successes(n, seed, |rng| {
        // draw every device each trial so stream usage is configuration-independent
        let mut all = true;
        let mut some = false;
        for (d, &th) in devices.iter().zip(&shares) {
            let ok = device_meets(d, th, rng);
            all &= ok;
            some |= ok;
        }
        if any {
            some
        } else {
            all
        }
    });
    Ok(McEstimate::from_counts(successes, n, seed))
}

/// Bernoulli-composition oracle: device i succeeds independently with
/// probability `reliabilities[i]`. A partitioned configuration passes the
/// per-device R_i(α_i Θ) values, so it composes like a series.
pub fn mc_bernoulli_composition(
    reliabilities: &[f64],
    configuration: &Configuration,
    n: u64,
    seed: u64,
) -> Result<McEstimate, McError> {
    check_n(n)?;
    if let Some(&r) = reliabilities.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(McError::InvalidReliability(r));
    }
    let any = matches!(configuration, Configuration::Parallel);
    let successes = count_successes(n, seed, |rng| {
        let mut all = true;
        let mut some = false;
        for &r in reliabilities {
            let ok = rng.bernoulli(r);
            all &= ok;
            some |= ok;
        }
        if any {
            some
        } else {
            all
        }
    });
    Ok(McEstimate::from_counts(successes, n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probkernel::{Bounds, Marginal};
    use crate::reliability::{reliability, reliability_mi};
    use crate::system::{optimize_partition, parallel_reliability, partitioned_reliability, series_reliability};

    fn b(lo: f64, hi: f64) -> Bounds {
        Bounds::new(lo, hi).unwrap()
    }

    fn q(t: f64) -> QosThreshold {
        QosThreshold::new(t).unwrap()
    }

    fn mi(label: &str, c: (f64, f64), d: (f64, f64)) -> DeviceModel {
        DeviceModel::minimal_information(label, b(c.0, c.1), b(d.0, d.1)).unwrap()
    }

    #[test]
    fn certain_event() {
        let e = mc_single_reliability(&mi("a", (100.0, 200.0), (10.0, 20.0)), q(1.0), 100_000, 1).unwrap();
        assert_eq!((e.estimate, e.ci_lo, e.ci_hi), (1.0, 1.0, 1.0));
    }

    #[test]
    fn band_contains_closed_form() {
        let d = mi("a", (55.0, 152.0), (55.0, 278.0));
        let e = mc_single_reliability(&d, q(2.0), 1_000_000, 2).unwrap();
        assert!(e.band_contains(reliability_mi(b(55.0, 152.0), b(55.0, 278.0), q(2.0))));
        assert!(e.ci_lo <= e.estimate && e.estimate <= e.ci_hi);
    }

    #[test]
    fn hand_fixture_against_ten_million_draws() {
        let d = mi("a", (60.0, 200.0), (80.0, 100.0));
        let e = mc_single_reliability(&d, q(1.0), 10_000_000, 3).unwrap();
        assert!(e.z_score(11.0 / 14.0) < 3.0);
    }

    #[test]
    fn theta_four_against_ten_million_draws() {
        let d = mi("a", (55.0, 152.0), (55.0, 278.0));
        let r = reliability(&d, q(4.0)).unwrap();
        let e = mc_single_reliability(&d, q(4.0), 10_000_000, 4).unwrap();
        assert!((e.estimate - r).abs() <= 0.001);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let d = mi("a", (55.0, 152.0), (55.0, 278.0));
        let a = mc_single_reliability(&d, q(1.5), 300_001, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mc_single_reliability(&d, q(1.5), 300_001, 9).unwrap());
        assert_eq!(a, b);
        assert_ne!(a.successes, mc_single_reliability(&d, q(1.5), 300_001, 10).unwrap().successes);
    }

    #[test]
    fn input_validation() {
        let d = mi("a", (55.0, 152.0), (55.0, 278.0));
        assert!(matches!(mc_single_reliability(&d, q(1.0), 999, 0), Err(McError::TooFewSamples(999))));
        assert!(mc_bernoulli_composition(&[1.2], &Configuration::Series, 1000, 0).is_err());
    }

    #[test]
    fn series_of_one_matches_single() {
        let d = mi("a", (55.0, 152.0), (55.0, 278.0));
        let pool = DevicePool::new(vec![d.clone()]).unwrap();
        let s = mc_system_reliability(&pool, &Configuration::Series, q(1.2), 200_000, 5).unwrap();
        let single = mc_single_reliability(&d, q(1.2), 200_000, 5).unwrap();
        assert_eq!(s.successes, single.successes);
    }

    #[test]
    fn parallel_of_two_narrow_devices() {
        // C uniform on [90, 100] against an almost fixed Δ = 91: R = 0.9
        let dev = |l: &str| {
            DeviceModel::new(l, Marginal::uniform(b(90.0, 100.0)), Marginal::uniform(b(90.999_999, 91.000_001))).unwrap()
        };
        let pool = DevicePool::new(vec![dev("a"), dev("b")]).unwrap();
        let r = reliability(&pool.devices()[0], q(1.0)).unwrap();
        assert!((r - 0.9).abs() < 1e-6);
        let e = mc_system_reliability(&pool, &Configuration::Parallel, q(1.0), 1_000_000, 6).unwrap();
        assert!(e.z_score(0.99) < 3.0, "{e:?}");
    }

    #[test]
    fn partitioned_homogeneous_pool_at_optimizer_allocation() {
        let d = mi("a", (55.0, 152.0), (55.0, 278.0));
        let pool = DevicePool::homogeneous(&d, 4).unwrap();
        let t = q(6.0);
        let sol = optimize_partition(&pool, t).unwrap();
        let cfg = Configuration::Partitioned { allocation: sol.allocation.clone() };
        let e = mc_system_reliability(&pool, &cfg, t, 1_000_000, 7).unwrap();
        assert!(e.z_score(sol.reliability) < 3.0, "{e:?} vs {}", sol.reliability);
    }

    #[test]
    fn bernoulli_composition_matches_formulas() {
        let pool = DevicePool::new(vec![
            mi("a", (55.0, 152.0), (55.0, 278.0)),
            mi("b", (80.0, 200.0), (55.0, 150.0)),
            mi("c", (40.0, 90.0), (30.0, 120.0)),
        ])
        .unwrap();
        let t = q(1.1);
        let rs = pool.reliabilities(t).unwrap();
        let s = mc_bernoulli_composition(&rs, &Configuration::Series, 1_000_000, 8).unwrap();
        assert!(s.z_score(series_reliability(&pool, &[t; 3]).unwrap()) < 3.0);
        let p = mc_bernoulli_composition(&rs, &Configuration::Parallel, 1_000_000, 8).unwrap();
        assert!(p.z_score(parallel_reliability(&pool, t).unwrap()) < 3.0);
        let alloc = Allocation::new(vec![0.2, 0.5, 0.3]).unwrap();
        let shared: Vec<f64> = pool
            .devices()
            .iter()
            .zip(alloc.fractions())
            .map(|(d, a)| reliability(d, t.share(*a).unwrap()).unwrap())
            .collect();
        let cfg = Configuration::Partitioned { allocation: alloc.clone() };
        let m = mc_bernoulli_composition(&shared, &cfg, 1_000_000, 8).unwrap();
        assert!(m.z_score(partitioned_reliability(&pool, &alloc, t).unwrap()) < 3.0);
    }

    #[test]
    fn band_width_shrinks_as_inverse_sqrt_n() {
        let d = mi("a", (55.0, 152.0), (55.0, 278.0));
        let w: Vec<f64> = [10_000u64, 100_000, 1_000_000]
            .iter()
            .map(|&n| mc_single_reliability(&d, q(1.5), n, 11).unwrap().half_width())
            .collect();
        for pair in w.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((ratio - 10f64.sqrt()).abs() < 0.1, "{ratio}");
        }
    }

    #[test]
    fn z_score_edge_cases() {
        let e = McEstimate::from_counts(1000, 1000, 0);
        assert_eq!(e.z_score(1.0), 0.0);
        assert_eq!(e.z_score(0.0), f64::INFINITY);
        let e = McEstimate::from_counts(500, 1000, 0);
        assert!((e.z_score(0.5)).abs() < 1e-12);
    }
}
