//! Optimal workload partitioning: maximize Π_i R_i(α_i Θ) over the simplex.
//!
//! In threshold coordinates θ_i = α_i Θ, write h_i(θ) = −R_i'(θ)/R_i(θ) for
//! the marginal log-reliability decay. It is 0 up to the saturation point
//! s_i = C_min/Δ_max and grows without bound towards the cutoff
//! c_i = C_max/Δ_min. At an interior optimum every h_i(θ_i) equals a common
//! multiplier ν. When every h_i is nondecreasing, θ_i(ν) = sup{θ : h_i(θ) ≤ ν}
//! is monotone in ν, and a bisection on ν with Σθ_i(ν) = Θ finds the optimum.
//! Otherwise a pairwise coordinate search is used.

use serde::{Deserialize, Serialize};

use super::{partitioned_reliability, Allocation, DevicePool, SystemError};
use crate::quadrature::QuadConfig;
use crate::reliability::{reliability_derivative, reliability_with, DeviceModel, QosThreshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    /// One device takes the whole workload.
    Single,
    /// Θ fits under the pool's combined saturation points; R = 1.
    Saturated,
    /// Bisection on the common multiplier.
    Lagrangian,
    /// Pairwise 1-D search (non-monotone marginal decay).
    PairwiseSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSolution {
    pub allocation: Allocation,
    pub reliability: f64,
    pub equal_split_reliability: f64,
    /// Largest pairwise gap in h_i(α_i Θ) across devices strictly between
    /// saturation and cutoff.
    pub kkt_residual: f64,
    pub multiplier: Option<f64>,
    pub method: PartitionMethod,
}

fn tight() -> QuadConfig {
    QuadConfig { abs_tol: 1e-15, rel_tol: 1e-12, ..QuadConfig::default() }
}

/// −R'(θ)/R(θ); +∞ where R = 0.
pub fn marginal_log_decay(device: &DeviceModel, theta: QosThreshold) -> Result<f64, SystemError> {
    let r = reliability_with(device, theta, &tight())?;
    if r <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-reliability_derivative(device, theta)? / r)
}

struct Member<'a> {
    device: &'a DeviceModel,
    saturation: f64,
    cutoff: f64,
}

impl Member<'_> {
    fn decay(&self, theta: f64) -> Result<f64, SystemError> {
        if theta <= self.saturation {
            return Ok(0.0);
        }
        if theta >= self.cutoff {
            return Ok(f64::INFINITY);
        }
        marginal_log_decay(self.device, QosThreshold::new(theta)?)
    }

    fn log_reliability(&self, theta: f64) -> Result<f64, SystemError> {
        if theta <= self.saturation {
            return Ok(0.0);
        }
        if theta >= self.cutoff {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(reliability_with(self.device, QosThreshold::new(theta)?, &tight())?.ln())
    }

    /// sup{θ : h(θ) ≤ ν}.
    fn theta_at(&self, nu: f64) -> Result<f64, SystemError> {
        let (mut lo, mut hi) = (self.saturation, self.cutoff);
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.decay(mid)? <= nu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    fn decay_is_monotone(&self) -> Result<bool, SystemError> {
        let span = self.cutoff - self.saturation;
        let mut prev = 0.0f64;
        for k in 1..=32 {
            let h = self.decay(self.saturation + span * k as f64 / 33.0)?;
            if h < prev - 1e-9 * (1.0 + prev.abs()) {
                return Ok(false);
            }
            prev = h;
        }
        Ok(true)
    }
}

fn members(pool: &DevicePool) -> Vec<Member<'_>> {
    pool.devices()
        .iter()
        .map(|d| Member { device: d, saturation: d.saturation_threshold(), cutoff: d.cutoff_threshold() })
        .collect()
}

fn objective(ms: &[Member], thetas: &[f64]) -> Result<f64, SystemError> {
    let mut total = 0.0;
    for (m, &t) in ms.iter().zip(thetas) {
        total += m.log_reliability(t)?;
    }
    Ok(total)
}

fn kkt_residual(ms: &[Member], thetas: &[f64]) -> Result<f64, SystemError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (m, &t) in ms.iter().zip(thetas) {
        if t > m.saturation && t < m.cutoff {
            let h = m.decay(t)?;
            lo = lo.min(h);
            hi = hi.max(h);
        }
    }
    Ok(if hi >= lo { hi - lo } else { 0.0 })
}

/// Allocation maximizing the partitioned reliability of `pool` at `theta`.
///
/// Ties (flat objective) resolve to the equal split. The returned reliability
/// is never below the equal split's.
pub fn optimize_partition(pool: &DevicePool, theta: QosThreshold) -> Result<PartitionSolution, SystemError> {
    let n = pool.len();
    let total = theta.value();
    let equal = Allocation::equal(n)?;
    let equal_r = partitioned_reliability(pool, &equal, theta)?;
    let finish = |allocation: Allocation, method, multiplier, kkt| -> Result<PartitionSolution, SystemError> {
        let reliability = partitioned_reliability(pool, &allocation, theta)?;
        Ok(PartitionSolution { allocation, reliability, equal_split_reliability: equal_r, kkt_residual: kkt, multiplier, method })
    };
    if n == 1 {
        return finish(equal, PartitionMethod::Single, None, 0.0);
    }

    let ms = members(pool);
    let cutoff_sum: f64 = ms.iter().map(|m| m.cutoff).sum();
    if cutoff_sum <= total {
        return Err(SystemError::Infeasible(format!(
            "sum of device cutoffs C_max/Δ_min is {cutoff_sum}, not above Θ = {total}: some device fails on every split"
        )));
    }
    let saturation_sum: f64 = ms.iter().map(|m| m.saturation).sum();
    if saturation_sum >= total {
        if equal_r == 1.0 {
            return finish(equal, PartitionMethod::Saturated, Some(0.0), 0.0);
        }
        let weights: Vec<f64> = ms.iter().map(|m| m.saturation).collect();
        return finish(Allocation::normalized(&weights)?, PartitionMethod::Saturated, Some(0.0), 0.0);
    }

    let mut monotone = true;
    for m in &ms {
        if !m.decay_is_monotone()? {
            monotone = false;
            break;
        }
    }
    let (thetas, method, multiplier) = if monotone {
        match lagrangian(&ms, total)? {
            Some((thetas, nu)) => (thetas, PartitionMethod::Lagrangian, Some(nu)),
            None => (pairwise(&ms, total)?, PartitionMethod::PairwiseSearch, None),
        }
    } else {
        (pairwise(&ms, total)?, PartitionMethod::PairwiseSearch, None)
    };

    let allocation = Allocation::normalized(&thetas)?;
    let scaled: Vec<f64> = allocation.fractions().iter().map(|a| a * total).collect();
    let kkt = kkt_residual(&ms, &scaled)?;
    let candidate = finish(allocation, method, multiplier, kkt)?;
    if !candidate.reliability.is_finite() {
        return Err(SystemError::NonConvergence {
            best: candidate.allocation.fractions().to_vec(),
            reliability: candidate.reliability,
        });
    }
    // ties (within rounding) resolve to the equal split
    if candidate.reliability <= equal_r * (1.0 + 1e-12) {
        let eq_thetas = vec![total / n as f64; n];
        let kkt = kkt_residual(&ms, &eq_thetas)?;
        return finish(Allocation::equal(n)?, method, multiplier, kkt);
    }
    Ok(candidate)
}

/// Bisection on the multiplier; `None` if no bracket is found.
fn lagrangian(ms: &[Member], total: f64) -> Result<Option<(Vec<f64>, f64)>, SystemError> {
    let thetas_at = |nu: f64| -> Result<Vec<f64>, SystemError> { ms.iter().map(|m| m.theta_at(nu)).collect() };
    let excess = |ts: &[f64]| ts.iter().sum::<f64>() - total;

    let mut lo = 0.0;
    let mut hi = 1.0 / total;
    let mut found = false;
    for _ in 0..2000 {
        if excess(&thetas_at(hi)?) >= 0.0 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Ok(None);
    }
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if excess(&thetas_at(mid)?) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    Ok(Some((thetas_at(nu)?, nu)))
}

/// Repeated exact line searches on every pair (θ_i, θ_j) with θ_i + θ_j fixed.
fn pairwise(ms: &[Member], total: f64) -> Result<Vec<f64>, SystemError> {
    let n = ms.len();
    let equal = vec![total / n as f64; n];
    let cutoff_sum: f64 = ms.iter().map(|m| m.cutoff).sum();
    let proportional: Vec<f64> = ms.iter().map(|m| total * m.cutoff / cutoff_sum).collect();
    let mut thetas = if objective(ms, &equal)? >= objective(ms, &proportional)? { equal } else { proportional };
    let mut best = objective(ms, &thetas)?;

    for _ in 0..200 {
        let before = best;
        for i in 0..n {
            for j in i + 1..n {
                let pair = thetas[i] + thetas[j];
                let f = |x: f64| -> Result<f64, SystemError> {
                    Ok(ms[i].log_reliability(x)? + ms[j].log_reliability(pair - x)?)
                };
                let grid = 64;
                let step = pair / grid as f64;
                let (mut bx, mut bv) = (thetas[i], f(thetas[i])?);
                for k in 1..grid {
                    let x = step * k as f64;
                    let v = f(x)?;
                    if v > bv {
                        (bx, bv) = (x, v);
                    }
                }
                // golden-section refinement around the best grid point
                let (mut a, mut b) = ((bx - step).max(0.0), (bx + step).min(pair));
                let g = 0.5 * (5f64.sqrt() - 1.0);
                let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
                let (mut f1, mut f2) = (f(x1)?, f(x2)?);
                for _ in 0..100 {
                    if b - a <= 1e-13 * pair {
                        break;
                    }
                    if f1 >= f2 {
                        b = x2;
                        (x2, f2) = (x1, f1);
                        x1 = b - g * (b - a);
                        f1 = f(x1)?;
                    } else {
                        a = x1;
                        (x1, f1) = (x2, f2);
                        x2 = a + g * (b - a);
                        f2 = f(x2)?;
                    }
                }
                let (x, v) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
                let (mut x, mut v) = if v > bv { (x, v) } else { (bx, bv) };
                // golden section stalls at √ε relative accuracy; finish with a
                // root solve of the stationarity condition h_i(x) = h_j(pair − x)
                if let Some(root) = stationary_point(&ms[i], &ms[j], pair, (x - step).max(0.0), (x + step).min(pair))? {
                    let vr = f(root)?;
                    if vr >= v - 1e-15 * v.abs().max(1.0) {
                        (x, v) = (root, vr.max(v));
                    }
                }
                if x > 0.0 && x < pair {
                    let current = f(thetas[i])?;
                    if v > current {
                        thetas[i] = x;
                        thetas[j] = pair - x;
                    }
                }
            }
        }
        best = objective(ms, &thetas)?;
        if best - before <= 1e-14 * best.abs().max(1.0) {
            break;
        }
    }
    Ok(thetas)
}

/// Root of h_i(x) − h_j(pair − x) on [lo, hi] when it brackets a sign change
/// from negative to positive (a local maximum of the pair objective).
fn stationary_point(mi: &Member, mj: &Member, pair: f64, lo: f64, hi: f64) -> Result<Option<f64>, SystemError> {
    let g = |x: f64| -> Result<f64, SystemError> { Ok(mi.decay(x)? - mj.decay(pair - x)?) };
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (g(a)?, g(b)?);
    if !(ga < 0.0 && gb > 0.0) {
        return Ok(None);
    }
    for _ in 0..200 {
        if b - a <= 1e-15 * pair {
            break;
        }
        let m = 0.5 * (a + b);
        if g(m)? < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probkernel::{Bounds, Marginal, SimRng};
    use crate::system::tests::{mi, random_pool};

    fn q(t: f64) -> QosThreshold {
        QosThreshold::new(t).unwrap()
    }

    fn sweep_two(pool: &DevicePool, theta: QosThreshold, step: f64) -> f64 {
        let n = (1.0 / step).round() as usize;
        (1..n)
            .map(|k| {
                let a = k as f64 * step;
                partitioned_reliability(pool, &Allocation::new(vec![a, 1.0 - a]).unwrap(), theta).unwrap()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn homogeneous_pools_split_equally() {
        let mi_dev = mi("u", (55.0, 152.0), (55.0, 278.0));
        let b = |lo, hi| Bounds::new(lo, hi).unwrap();
        let hist = DeviceModel::new(
            "h",
            Marginal::truncnorm(120.0, 25.0, b(55.0, 200.0)).unwrap(),
            Marginal::truncnorm(70.0, 15.0, b(40.0, 110.0)).unwrap(),
        )
        .unwrap();
        for dev in [mi_dev, hist] {
            for n in [2, 3, 5] {
                let pool = DevicePool::homogeneous(&dev, n).unwrap();
                let sol = optimize_partition(&pool, q(1.8 * n as f64)).unwrap();
                for &a in sol.allocation.fractions() {
                    assert!((a - 1.0 / n as f64).abs() < 1e-9, "{:?}", sol);
                }
                assert!(sol.reliability >= sol.equal_split_reliability);
            }
        }
    }

    #[test]
    fn homogeneous_pool_can_prefer_an_unequal_split() {
        // R of this device is not log-concave around Θ = 0.6–1.1; an equal
        // split at Θ/N = 0.9 is a local minimum of Σ ln R.
        let d = mi("u", (55.0, 152.0), (55.0, 278.0));
        let pool = DevicePool::homogeneous(&d, 2).unwrap();
        let sol = optimize_partition(&pool, q(1.8)).unwrap();
        assert!(sol.reliability > sol.equal_split_reliability * 1.05);
        assert!(sol.reliability >= sweep_two(&pool, q(1.8), 1e-4) - 1e-12);
        let a = sol.allocation.fractions()[0].max(sol.allocation.fractions()[1]);
        assert!((a * 1.8 - 1.3147).abs() < 1e-3, "{a}");
    }

    #[test]
    fn two_device_example_beats_sweep_and_perturbations() {
        let pool = DevicePool::new(vec![mi("A", (100.0, 200.0), (50.0, 100.0)), mi("B", (60.0, 120.0), (50.0, 100.0))])
            .unwrap();
        let theta = q(2.0);
        let sol = optimize_partition(&pool, theta).unwrap();
        assert!(sol.reliability > sol.equal_split_reliability);
        assert!(sol.reliability >= sweep_two(&pool, theta, 1e-4) - 1e-12);
        let a = sol.allocation.fractions()[0];
        for d in [-0.01, 0.01] {
            let p = partitioned_reliability(&pool, &Allocation::new(vec![a + d, 1.0 - a - d]).unwrap(), theta).unwrap();
            assert!(sol.reliability >= p);
        }
        assert!(sol.kkt_residual <= 1e-6);
        assert!(a > 0.5, "the stronger device takes the larger share");
    }

    #[test]
    fn flat_objective_returns_equal_split() {
        let pool = DevicePool::new(vec![mi("A", (100.0, 200.0), (10.0, 20.0)), mi("B", (60.0, 120.0), (10.0, 20.0))])
            .unwrap();
        let sol = optimize_partition(&pool, q(1.0)).unwrap();
        assert_eq!(sol.method, PartitionMethod::Saturated);
        assert_eq!(sol.allocation.fractions(), &[0.5, 0.5]);
        assert_eq!(sol.reliability, 1.0);
        // saturated, but not under the equal split: shares follow the saturation points
        let pool = DevicePool::new(vec![mi("A", (100.0, 200.0), (10.0, 20.0)), mi("B", (10.0, 20.0), (10.0, 20.0))])
            .unwrap();
        let sol = optimize_partition(&pool, q(5.0)).unwrap();
        assert_eq!(sol.reliability, 1.0);
        assert!(sol.equal_split_reliability < 1.0);
    }

    #[test]
    fn infeasible_pool_is_reported() {
        let pool = DevicePool::new(vec![mi("A", (10.0, 20.0), (50.0, 100.0)), mi("B", (10.0, 20.0), (50.0, 100.0))])
            .unwrap();
        assert!(matches!(optimize_partition(&pool, q(1.0)), Err(SystemError::Infeasible(_))));
    }

    #[test]
    fn single_device() {
        let d = mi("A", (55.0, 152.0), (55.0, 278.0));
        let sol = optimize_partition(&DevicePool::new(vec![d]).unwrap(), q(1.0)).unwrap();
        assert_eq!(sol.allocation.fractions(), &[1.0]);
        assert_eq!(sol.method, PartitionMethod::Single);
    }

    #[test]
    fn random_two_device_pools_match_exhaustive_sweep() {
        let mut rng = SimRng::new(31);
        let mut done = 0;
        while done < 20 {
            let mut dev = || {
                let cl = rng.uniform(40.0, 120.0);
                let ch = cl + rng.uniform(20.0, 150.0);
                let dl = rng.uniform(20.0, 80.0);
                let dh = dl + rng.uniform(10.0, 150.0);
                (cl, ch, dl, dh)
            };
            let (a, b) = (dev(), dev());
            let pool = DevicePool::new(vec![mi("a", (a.0, a.1), (a.2, a.3)), mi("b", (b.0, b.1), (b.2, b.3))]).unwrap();
            let t = q(rng.uniform(1.0, 4.0));
            let Ok(sol) = optimize_partition(&pool, t) else { continue };
            assert!(sol.reliability >= sweep_two(&pool, t, 1e-4) - 1e-6);
            assert!(sol.kkt_residual <= 1e-6, "{sol:?}");
            done += 1;
        }
    }

    #[test]
    fn heterogeneous_pools_satisfy_stationarity_and_share_ordering() {
        let mut rng = SimRng::new(77);
        let mut done = 0;
        while done < 25 {
            let n = 2 + (rng.next_u64() % 4) as usize;
            let pool = random_pool(&mut rng, n);
            let t = q(rng.uniform(0.8, 2.0) * n as f64);
            let sol = match optimize_partition(&pool, t) {
                Ok(s) => s,
                Err(SystemError::Infeasible(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            assert!(sol.reliability >= sol.equal_split_reliability);
            assert!(sol.kkt_residual <= 1e-6, "{sol:?}");
            // whichever device decays slowest at the equal split gains share,
            // the fastest one gives share up
            let even = t.share(1.0 / n as f64).unwrap();
            let hs: Vec<f64> = pool.devices().iter().map(|d| marginal_log_decay(d, even).unwrap()).collect();
            let argmin = (0..n).min_by(|&i, &j| hs[i].total_cmp(&hs[j])).unwrap();
            let argmax = (0..n).max_by(|&i, &j| hs[i].total_cmp(&hs[j])).unwrap();
            if sol.reliability > 0.0 && hs[argmin] < hs[argmax] {
                let f = sol.allocation.fractions();
                assert!(f[argmin] >= 1.0 / n as f64 - 1e-9 && f[argmax] <= 1.0 / n as f64 + 1e-9, "{hs:?} {f:?}");
            }
            done += 1;
        }
    }

    #[test]
    fn decay_matches_finite_difference() {
        let d = mi("A", (100.0, 200.0), (50.0, 100.0));
        let h = marginal_log_decay(&d, q(1.5)).unwrap();
        let r = |t: f64| crate::reliability::reliability(&d, q(t)).unwrap();
        let fd = -(r(1.5 + 1e-6) - r(1.5 - 1e-6)) / 2e-6 / r(1.5);
        assert!((h - fd).abs() < 1e-6);
        assert_eq!(marginal_log_decay(&d, q(5.0)).unwrap(), f64::INFINITY);
    }
}
