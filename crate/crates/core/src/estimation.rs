//! Truncated-normal fitting from bounded observation histories.
//!
//! The fit is a true maximum-likelihood estimate. It runs a projected Newton
//! iteration on the standardized parameters `((μ − mid)/range, ln(σ/range))`,
//! using the analytic gradient and a finite-difference Hessian of that
//! gradient, with an Armijo backtracking line search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probkernel::{std_normal_mass, std_normal_pdf, Bounds, ModelError, TruncNormModel, NORMALIZER_FLOOR};
use crate::reliability::{DeviceModel, ReliabilityError};

/// Projected-gradient norm at which a fit is reported as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// σ is kept within [range·1e-6, range·1e4] during optimization.
pub const SIGMA_MIN_FRACTION: f64 = 1e-6;
pub const SIGMA_MAX_FRACTION: f64 = 1e4;
const MAX_ITERATIONS: usize = 500;
const INNER_TOL: f64 = 1e-9;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("sample {index} = {value} lies outside the declared bounds [{lo}, {hi}]")]
    OutOfBounds { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("all {n} samples equal {value}: the likelihood has no finite maximum; use moments_init instead")]
    Degenerate { n: usize, value: f64 },
    #[error("{samples} samples but {timestamps} timestamps")]
    TimestampMismatch { samples: usize, timestamps: usize },
    #[error("decimation interval must be at least 1")]
    InvalidInterval,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Device(#[from] ReliabilityError),
}

/// Samples of one quantity (capacity or demand, GFLOPS) with their physical
/// bounds and optional frame indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TraceSpec", into = "TraceSpec")]
pub struct ObservationTrace {
    samples: Vec<f64>,
    bounds: Bounds,
    timestamps: Option<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceSpec {
    samples: Vec<f64>,
    bounds: Bounds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<u64>>,
}

impl TryFrom<TraceSpec> for ObservationTrace {
    type Error = FitError;

    fn try_from(s: TraceSpec) -> Result<Self, FitError> {
        match s.timestamps {
            Some(ts) => ObservationTrace::with_timestamps(s.samples, ts, s.bounds),
            None => ObservationTrace::new(s.samples, s.bounds),
        }
    }
}

impl From<ObservationTrace> for TraceSpec {
    fn from(t: ObservationTrace) -> Self {
        TraceSpec { samples: t.samples, bounds: t.bounds, timestamps: t.timestamps }
    }
}

fn check_sample(index: usize, value: f64, bounds: Bounds) -> Result<(), FitError> {
    if !value.is_finite() {
        return Err(FitError::NonFinite { index });
    }
    if !bounds.contains(value) {
        return Err(FitError::OutOfBounds { index, value, lo: bounds.lo(), hi: bounds.hi() });
    }
    Ok(())
}

impl ObservationTrace {
    pub fn new(samples: Vec<f64>, bounds: Bounds) -> Result<Self, FitError> {
        bounds.check_physical()?;
        for (i, &x) in samples.iter().enumerate() {
            check_sample(i, x, bounds)?;
        }
        Ok(Self { samples, bounds, timestamps: None })
    }

    pub fn with_timestamps(samples: Vec<f64>, timestamps: Vec<u64>, bounds: Bounds) -> Result<Self, FitError> {
        if samples.len() != timestamps.len() {
            return Err(FitError::TimestampMismatch { samples: samples.len(), timestamps: timestamps.len() });
        }
        let mut t = Self::new(samples, bounds)?;
        t.timestamps = Some(timestamps);
        Ok(t)
    }

    pub fn empty(bounds: Bounds) -> Result<Self, FitError> {
        Self::new(Vec::new(), bounds)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn timestamps(&self) -> Option<&[u64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends one sample; on rejection the trace is unchanged. A trace with
    /// timestamps gets the next frame index.
    pub fn push(&mut self, value: f64) -> Result<(), FitError> {
        check_sample(self.samples.len(), value, self.bounds)?;
        self.samples.push(value);
        if let Some(ts) = &mut self.timestamps {
            let next = ts.last().map_or(0, |t| t + 1);
            ts.push(next);
        }
        Ok(())
    }

    /// First prefix of `len` samples.
    pub fn prefix(&self, len: usize) -> Self {
        let len = len.min(self.samples.len());
        Self {
            samples: self.samples[..len].to_vec(),
            bounds: self.bounds,
            timestamps: self.timestamps.as_ref().map(|t| t[..len].to_vec()),
        }
    }

    /// Keeps the first frame of every change interval, turning a per-frame
    /// trace into independent samples. Frames are grouped by
    /// `timestamp / interval` when timestamps exist, by position otherwise.
    pub fn decimate(&self, interval: u64) -> Result<Self, FitError> {
        if interval == 0 {
            return Err(FitError::InvalidInterval);
        }
        let keys: Vec<u64> = match &self.timestamps {
            Some(ts) => ts.iter().map(|t| t / interval).collect(),
            None => (0..self.samples.len() as u64).map(|i| i / interval).collect(),
        };
        let mut samples = Vec::new();
        let mut stamps = Vec::new();
        let mut last = None;
        for (i, &k) in keys.iter().enumerate() {
            if last != Some(k) {
                samples.push(self.samples[i]);
                stamps.push(self.timestamps.as_ref().map_or(i as u64, |t| t[i]));
                last = Some(k);
            }
        }
        Ok(Self {
            samples,
            bounds: self.bounds,
            timestamps: self.timestamps.as_ref().map(|_| stamps),
        })
    }
}

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: TruncNormModel,
    pub loglik: f64,
    pub n_samples: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the projected per-sample gradient in standardized units.
    pub gradient_norm: f64,
}

/// Uniform-assumption starting point. No samples: (midpoint, range/√12).
/// Otherwise the sample mean and sample standard deviation, the latter
/// floored at range/1000.
pub fn moments_init(trace: &ObservationTrace) -> (f64, f64) {
    let b = trace.bounds();
    let n = trace.len();
    if n == 0 {
        return (b.midpoint(), b.range() / 12f64.sqrt());
    }
    let (mean, ss) = centered_stats(trace.samples());
    let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    (mean, sd.max(b.range() / 1000.0))
}

fn centered_stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss)
}

/// Σ log f(x; μ, σ, lo, hi) for the truncated normal. −∞ when the
/// normalizing mass is below the floor or σ ≤ 0.
pub fn truncnorm_loglik(samples: &[f64], bounds: Bounds, mu: f64, sigma: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let (mean, ss) = centered_stats(samples);
    Stats { n: samples.len() as f64, mean, ss, bounds }.loglik(mu, sigma)
}

/// Sufficient statistics of a trace: n, mean and centered sum of squares.
#[derive(Debug, Clone, Copy)]
struct Stats {
    n: f64,
    mean: f64,
    ss: f64,
    bounds: Bounds,
}

impl Stats {
    fn sum_sq_dev(&self, mu: f64) -> f64 {
        self.ss + self.n * (self.mean - mu).powi(2)
    }

    fn loglik(&self, mu: f64, sigma: f64) -> f64 {
        if !(sigma > 0.0 && mu.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let a = (self.bounds.lo() - mu) / sigma;
        let b = (self.bounds.hi() - mu) / sigma;
        let z = std_normal_mass(a, b);
        if z < NORMALIZER_FLOOR {
            return f64::NEG_INFINITY;
        }
        -self.n * (sigma.ln() + z.ln() + LN_SQRT_2PI) - self.sum_sq_dev(mu) / (2.0 * sigma * sigma)
    }

    /// (∂ℓ/∂μ, ∂ℓ/∂σ).
    fn gradient(&self, mu: f64, sigma: f64) -> (f64, f64) {
        let a = (self.bounds.lo() - mu) / sigma;
        let b = (self.bounds.hi() - mu) / sigma;
        let z = std_normal_mass(a, b).max(NORMALIZER_FLOOR);
        let (pa, pb) = (std_normal_pdf(a), std_normal_pdf(b));
        // a·φ(a) → 0 as a → ±∞
        let (apa, bpb) = (if pa > 0.0 { a * pa } else { 0.0 }, if pb > 0.0 { b * pb } else { 0.0 });
        let d_mu = self.n * (self.mean - mu) / (sigma * sigma) - self.n * (pa - pb) / (sigma * z);
        let d_sigma =
            -self.n / sigma + self.sum_sq_dev(mu) / sigma.powi(3) - self.n * (apa - bpb) / (sigma * z);
        (d_mu, d_sigma)
    }
}

/// Optimization in standardized coordinates p = (u, v), μ = mid + u·r,
/// σ = r·e^v, objective ℓ/n.
struct Problem {
    stats: Stats,
    mid: f64,
    r: f64,
    v_lo: f64,
    v_hi: f64,
}

impl Problem {
    fn new(stats: Stats) -> Self {
        let b = stats.bounds;
        Self {
            stats,
            mid: b.midpoint(),
            r: b.range(),
            v_lo: SIGMA_MIN_FRACTION.ln(),
            v_hi: SIGMA_MAX_FRACTION.ln(),
        }
    }

    fn to_params(&self, p: [f64; 2]) -> (f64, f64) {
        (self.mid + p[0] * self.r, self.r * p[1].exp())
    }

    fn encode_params(&self, mu: f64, sigma: f64) -> [f64; 2] {
        self.project([(mu - self.mid) / self.r, (sigma / self.r).ln()])
    }

    fn project(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(-SIGMA_MAX_FRACTION, SIGMA_MAX_FRACTION), p[1].clamp(self.v_lo, self.v_hi)]
    }

    fn value(&self, p: [f64; 2]) -> f64 {
        let (mu, sigma) = self.to_params(p);
        self.stats.loglik(mu, sigma) / self.stats.n
    }

    fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let (mu, sigma) = self.to_params(p);
        let (gm, gs) = self.stats.gradient(mu, sigma);
        [self.r * gm / self.stats.n, sigma * gs / self.stats.n]
    }

    /// Gradient with components pushing out of the box removed.
    fn projected_gradient(&self, p: [f64; 2], g: [f64; 2]) -> [f64; 2] {
        let lows = [-SIGMA_MAX_FRACTION, self.v_lo];
        let highs = [SIGMA_MAX_FRACTION, self.v_hi];
        let mut out = g;
        for k in 0..2 {
            if (p[k] <= lows[k] && g[k] < 0.0) || (p[k] >= highs[k] && g[k] > 0.0) {
                out[k] = 0.0;
            }
        }
        out
    }

    fn hessian(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let h = 1e-5;
        let mut m = [[0.0; 2]; 2];
        for k in 0..2 {
            let (mut up, mut dn) = (p, p);
            up[k] += h;
            dn[k] -= h;
            let (gu, gd) = (self.gradient(up), self.gradient(dn));
            for j in 0..2 {
                m[j][k] = (gu[j] - gd[j]) / (2.0 * h);
            }
        }
        let off = 0.5 * (m[0][1] + m[1][0]);
        m[0][1] = off;
        m[1][0] = off;
        m
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Maximum-likelihood truncated-normal fit, starting from `moments_init`.
pub fn fit_truncnorm_mle(trace: &ObservationTrace) -> Result<FitResult, FitError> {
    let (mu0, sigma0) = moments_init(trace);
    fit_truncnorm_mle_from(trace, mu0, sigma0)
}

/// Maximum-likelihood fit warm-started at `(mu0, sigma0)`.
pub fn fit_truncnorm_mle_from(trace: &ObservationTrace, mu0: f64, sigma0: f64) -> Result<FitResult, FitError> {
    let n = trace.len();
    if n < 2 {
        return Err(FitError::TooFewSamples(n));
    }
    let xs = trace.samples();
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(FitError::Degenerate { n, value: xs[0] });
    }
    let (mean, ss) = centered_stats(xs);
    let problem = Problem::new(Stats { n: n as f64, mean, ss, bounds: trace.bounds() });

    let mut p = problem.encode_params(mu0, sigma0.max(f64::MIN_POSITIVE));
    let mut f = problem.value(p);
    if !f.is_finite() {
        // warm start outside the feasible region: fall back to the moments point
        let (m, s) = moments_init(trace);
        p = problem.encode_params(m, s);
        f = problem.value(p);
    }
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let g = problem.gradient(p);
        let pg = problem.projected_gradient(p, g);
        if norm(pg) <= INNER_TOL {
            break;
        }
        iterations += 1;

        let h = problem.hessian(p);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let mut d = if h[0][0] < 0.0 && det > 0.0 {
            // Newton direction −H⁻¹g
            [-(h[1][1] * pg[0] - h[0][1] * pg[1]) / det, -(-h[1][0] * pg[0] + h[0][0] * pg[1]) / det]
        } else {
            pg
        };
        if d[0] * pg[0] + d[1] * pg[1] <= 0.0 {
            d = pg;
        }
        let dn = d[0].abs().max(d[1].abs());
        if dn > 2.0 {
            d = [d[0] * 2.0 / dn, d[1] * 2.0 / dn];
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = problem.project([p[0] + step * d[0], p[1] + step * d[1]]);
            let fc = problem.value(cand);
            let gain = g[0] * (cand[0] - p[0]) + g[1] * (cand[1] - p[1]);
            if fc.is_finite() && fc >= f + 1e-4 * gain {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, fc)) if cand != p => {
                p = cand;
                f = fc;
            }
            _ => break,
        }
    }

    let gradient_norm = norm(problem.projected_gradient(p, problem.gradient(p)));
    let (mu, sigma) = problem.to_params(p);
    Ok(FitResult {
        model: TruncNormModel::new(mu, sigma, trace.bounds())?,
        loglik: f * n as f64,
        n_samples: n,
        converged: gradient_norm <= CONVERGENCE_TOL,
        iterations,
        gradient_norm,
    })
}

/// A device whose capacity and demand marginals were both fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedDevice {
    pub device: DeviceModel,
    pub capacity: FitResult,
    pub demand: FitResult,
}

impl FittedDevice {
    pub fn converged(&self) -> bool {
        self.capacity.converged && self.demand.converged
    }
}

/// Fits capacity and demand separately and pairs them into a historical
/// device model.
pub fn fit_device(
    label: impl Into<String>,
    capacity: &ObservationTrace,
    demand: &ObservationTrace,
) -> Result<FittedDevice, FitError> {
    let c = fit_truncnorm_mle(capacity)?;
    let d = fit_truncnorm_mle(demand)?;
    let device = DeviceModel::new(label, c.model.into(), d.model.into())?;
    Ok(FittedDevice { device, capacity: c, demand: d })
}

/// Running fit that refits after every accepted sample, warm-started from the
/// previous parameters. Before two distinct samples exist it reports the
/// moments estimate (with the uniform prior's σ while n < 2).
#[derive(Debug, Clone)]
pub struct OnlineFit {
    trace: ObservationTrace,
    mu: f64,
    sigma: f64,
    last_fit: Option<FitResult>,
}

impl OnlineFit {
    pub fn new(bounds: Bounds) -> Result<Self, FitError> {
        let trace = ObservationTrace::empty(bounds)?;
        let (mu, sigma) = moments_init(&trace);
        Ok(Self { trace, mu, sigma, last_fit: None })
    }

    pub fn update(&mut self, sample: f64) -> Result<(), FitError> {
        self.trace.push(sample)?;
        let b = self.trace.bounds();
        match self.trace.len() {
            1 => {
                self.mu = sample;
                self.sigma = b.range() / 12f64.sqrt();
            }
            _ => match fit_truncnorm_mle_from(&self.trace, self.mu, self.sigma) {
                Ok(fit) => {
                    self.mu = fit.model.mu();
                    self.sigma = fit.model.sigma();
                    self.last_fit = Some(fit);
                }
                Err(FitError::Degenerate { .. }) => {
                    (self.mu, self.sigma) = moments_init(&self.trace);
                    self.last_fit = None;
                }
                Err(e) => return Err(e),
            },
        }
        Ok(())
    }

    pub fn params(&self) -> (f64, f64) {
        (self.mu, self.sigma)
    }

    pub fn model(&self) -> TruncNormModel {
        TruncNormModel::new(self.mu, self.sigma, self.trace.bounds()).expect("parameters kept valid by update")
    }

    pub fn n(&self) -> usize {
        self.trace.len()
    }

    pub fn trace(&self) -> &ObservationTrace {
        &self.trace
    }

    pub fn last_fit(&self) -> Option<&FitResult> {
        self.last_fit.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probkernel::{BoundedDistribution, Marginal, SimRng};
    use crate::reliability::{reliability_hist, reliability_mi, DeviceModel, QosThreshold};
    use proptest::prelude::*;

    fn b(lo: f64, hi: f64) -> Bounds {
        Bounds::new(lo, hi).unwrap()
    }

    fn trace(xs: &[f64]) -> ObservationTrace {
        ObservationTrace::new(xs.to_vec(), b(55.0, 152.0)).unwrap()
    }

    fn draw(model: &impl BoundedDistribution, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SimRng::new(seed);
        model.sample(&mut rng, n)
    }

    #[test]
    fn moments_of_empty_trace_are_the_uniform_prior() {
        let (m, s) = moments_init(&trace(&[]));
        assert_eq!(m, 103.5);
        assert!((s - 97.0 / 12f64.sqrt()).abs() < 1e-12);
        assert!((s - 28.0007).abs() < 1e-3);
    }

    #[test]
    fn moments_floor_zero_variance() {
        assert_eq!(moments_init(&trace(&[100.0, 100.0, 100.0])), (100.0, 0.097));
    }

    #[test]
    fn moments_of_uniform_samples() {
        let u = crate::probkernel::UniformModel::new(b(55.0, 152.0));
        let (m, s) = moments_init(&trace(&draw(&u, 10_000, 1)));
        assert!((m - 103.5).abs() < 1.0);
        assert!((s - 28.0).abs() < 1.0);
    }

    #[test]
    fn trace_rejects_out_of_bounds() {
        let err = ObservationTrace::new(vec![60.0, 160.0], b(55.0, 152.0)).unwrap_err();
        assert!(matches!(err, FitError::OutOfBounds { index: 1, .. }));
        assert!(ObservationTrace::new(vec![1.0], b(-1.0, 2.0)).is_err());
        let mut t = trace(&[60.0]);
        assert!(t.push(50.0).is_err());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn decimation_keeps_first_frame_of_each_interval() {
        let xs: Vec<f64> = (0..45).map(|i| 60.0 + i as f64).collect();
        let d = trace(&xs).decimate(20).unwrap();
        assert_eq!(d.samples(), &[60.0, 80.0, 100.0]);
        let ts: Vec<u64> = (5..50).collect();
        let t = ObservationTrace::with_timestamps(xs, ts, b(55.0, 152.0)).unwrap();
        let d = t.decimate(20).unwrap();
        assert_eq!(d.samples(), &[60.0, 75.0, 95.0]);
        assert_eq!(d.timestamps().unwrap(), &[5, 20, 40]);
        assert!(t.decimate(0).is_err());
    }

    #[test]
    fn loglik_matches_reference() {
        // scipy.stats.truncnorm.logpdf summed
        let xs = [60.0, 80.0, 100.0, 120.0, 140.0];
        let ll = truncnorm_loglik(&xs, b(55.0, 152.0), 100.0, 20.0);
        assert!((ll - -24.488_204_789_323_277).abs() < 1e-10);
        assert_eq!(truncnorm_loglik(&xs, b(55.0, 152.0), 1e6, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn analytic_gradient_matches_finite_difference() {
        let xs = [60.0, 80.0, 100.0, 120.0, 140.0, 151.0];
        let (mean, ss) = centered_stats(&xs);
        let st = Stats { n: xs.len() as f64, mean, ss, bounds: b(55.0, 152.0) };
        for (mu, s) in [(100.0, 20.0), (150.0, 5.0), (30.0, 40.0), (103.0, 500.0)] {
            let (gm, gs) = st.gradient(mu, s);
            let h = 1e-5;
            let fm = (st.loglik(mu + h, s) - st.loglik(mu - h, s)) / (2.0 * h);
            let fs = (st.loglik(mu, s + h) - st.loglik(mu, s - h)) / (2.0 * h);
            assert!((gm - fm).abs() < 1e-6 * (1.0 + fm.abs()), "mu {gm} {fm}");
            assert!((gs - fs).abs() < 1e-6 * (1.0 + fs.abs()), "sigma {gs} {fs}");
        }
    }

    #[test]
    fn mle_matches_reference_optimizer() {
        // scipy Nelder–Mead + BFGS on the same likelihood
        let ys = [71.2, 88.9, 93.4, 97.0, 101.5, 104.2, 110.8, 115.3, 122.6, 131.9, 140.1, 96.3];
        let fit = fit_truncnorm_mle(&trace(&ys)).unwrap();
        assert!(fit.converged);
        assert!((fit.model.mu() - 106.351_611_444_648_6).abs() < 1e-5);
        assert!((fit.model.sigma() - 19.332_998_333_200_2).abs() < 1e-5);
        assert!((fit.loglik - -51.869_428_011_814_37).abs() < 1e-9);

        let zs = [140.0, 145.0, 150.0, 151.0, 149.0, 147.0, 143.0, 138.0, 151.5, 146.0];
        let fit = fit_truncnorm_mle(&trace(&zs)).unwrap();
        assert!(fit.converged);
        assert!((fit.model.mu() - 150.832_489_814_938_2).abs() < 1e-4);
        assert!((fit.model.sigma() - 6.897_703_604_956_6).abs() < 1e-4);
        assert!((fit.loglik - -27.244_131_383_596_35).abs() < 1e-8);
        assert_eq!(fit.model.bounds(), b(55.0, 152.0));
    }

    #[test]
    fn mle_errors() {
        assert!(matches!(fit_truncnorm_mle(&trace(&[100.0])), Err(FitError::TooFewSamples(1))));
        let err = fit_truncnorm_mle(&trace(&[100.0, 100.0, 100.0])).unwrap_err();
        assert!(matches!(err, FitError::Degenerate { n: 3, .. }));
        assert!(err.to_string().contains("moments_init"));
    }

    #[test]
    fn mle_recovers_generating_parameters() {
        let truth = TruncNormModel::new(110.0, 15.0, b(55.0, 152.0)).unwrap();
        let fit = fit_truncnorm_mle(&trace(&draw(&truth, 10_000, 7))).unwrap();
        assert!(fit.converged);
        assert!((fit.model.mu() - 110.0).abs() < 0.5, "{}", fit.model.mu());
        assert!((fit.model.sigma() - 15.0).abs() < 0.5, "{}", fit.model.sigma());
    }

    #[test]
    fn uniform_data_fit_reproduces_mi_reliability() {
        let (cb, db) = (b(55.0, 152.0), b(55.0, 278.0));
        let cs = draw(&crate::probkernel::UniformModel::new(cb), 10_000, 11);
        let ds = draw(&crate::probkernel::UniformModel::new(db), 10_000, 12);
        let cf = fit_truncnorm_mle(&ObservationTrace::new(cs, cb).unwrap()).unwrap();
        let df = fit_truncnorm_mle(&ObservationTrace::new(ds, db).unwrap()).unwrap();
        let dev = DeviceModel::new("fit", Marginal::TruncNorm(cf.model), Marginal::TruncNorm(df.model)).unwrap();
        for t in [1.0, 2.0, 3.0] {
            let q = QosThreshold::new(t).unwrap();
            let diff = reliability_hist(&dev, q).unwrap() - reliability_mi(cb, db, q);
            assert!(diff.abs() < 0.01, "theta {t}: {diff}");
        }
    }

    #[test]
    fn online_matches_batch() {
        let truth = TruncNormModel::new(95.0, 20.0, b(55.0, 152.0)).unwrap();
        let xs = draw(&truth, 50, 3);
        let mut online = OnlineFit::new(b(55.0, 152.0)).unwrap();
        for &x in &xs {
            online.update(x).unwrap();
        }
        let batch = fit_truncnorm_mle(&trace(&xs)).unwrap();
        let (mu, sigma) = online.params();
        assert!((mu - batch.model.mu()).abs() < 1e-6);
        assert!((sigma - batch.model.sigma()).abs() < 1e-6);
        assert_eq!(online.n(), 50);
    }

    #[test]
    fn online_first_sample_moves_toward_it() {
        let mut online = OnlineFit::new(b(55.0, 152.0)).unwrap();
        let (m0, _) = online.params();
        online.update(140.0).unwrap();
        let (m1, _) = online.params();
        assert!((m1 - 140.0).abs() < (m0 - 140.0).abs());
        assert!(online.update(200.0).is_err());
        assert_eq!(online.n(), 1);
        assert_eq!(online.params().0, m1);
        // repeated value: falls back to moments instead of failing
        online.update(140.0).unwrap();
        assert_eq!(online.params(), (140.0, 0.097));
    }

    #[test]
    fn parameter_error_shrinks_with_sample_size() {
        let truth = TruncNormModel::new(120.0, 18.0, b(55.0, 152.0)).unwrap();
        let sizes = [10, 50, 130, 1000];
        let mut err = [0.0; 4];
        for seed in 0..20 {
            let xs = draw(&truth, 1000, 100 + seed);
            for (k, &n) in sizes.iter().enumerate() {
                let fit = fit_truncnorm_mle(&trace(&xs[..n])).unwrap();
                err[k] += (fit.model.mu() - 120.0).abs() / 20.0 + (fit.model.sigma() - 18.0).abs() / 20.0;
            }
        }
        assert!(err.windows(2).all(|w| w[1] < w[0]), "{err:?}");
    }

    #[test]
    fn reliability_error_shrinks_with_sample_size() {
        let cap = TruncNormModel::new(120.0, 18.0, b(55.0, 152.0)).unwrap();
        let dem = TruncNormModel::new(90.0, 40.0, b(55.0, 278.0)).unwrap();
        let truth = DeviceModel::new("t", Marginal::TruncNorm(cap), Marginal::TruncNorm(dem)).unwrap();
        let grid = [0.75, 1.0, 1.5, 2.0];
        let r_true: Vec<f64> = grid.iter().map(|&t| reliability_hist(&truth, QosThreshold::new(t).unwrap()).unwrap()).collect();
        let sizes = [10, 50, 130, 1000];
        let mut err = [0.0; 4];
        for seed in 0..20 {
            let cs = draw(&cap, 1000, 500 + seed);
            let ds = draw(&dem, 1000, 900 + seed);
            for (k, &n) in sizes.iter().enumerate() {
                let cf = fit_truncnorm_mle(&trace(&cs[..n])).unwrap();
                let df = fit_truncnorm_mle(&ObservationTrace::new(ds[..n].to_vec(), b(55.0, 278.0)).unwrap()).unwrap();
                let dev = DeviceModel::new("f", Marginal::TruncNorm(cf.model), Marginal::TruncNorm(df.model)).unwrap();
                for (i, &t) in grid.iter().enumerate() {
                    let r = reliability_hist(&dev, QosThreshold::new(t).unwrap()).unwrap();
                    err[k] += (r - r_true[i]).abs();
                }
            }
        }
        assert!(err.windows(2).all(|w| w[1] < w[0]), "{err:?}");
    }

    #[test]
    fn unattained_supremum_is_not_reported_as_converged() {
        // A decreasing histogram on a narrow range: the likelihood keeps rising
        // as μ → −∞ (exponential limit) until the normalizer floor stops it.
        let bounds = b(1.0, 2.0);
        let xs: Vec<f64> = (0..200).map(|i| 1.0 + (i as f64 / 200.0).powi(2)).collect();
        let fit = fit_truncnorm_mle(&ObservationTrace::new(xs, bounds).unwrap()).unwrap();
        assert!(!fit.converged);
        assert!(fit.gradient_norm > CONVERGENCE_TOL);
        assert!(fit.model.mu() < bounds.lo());
    }

    #[test]
    fn fit_device_pairs_the_two_fits() {
        let cap = TruncNormModel::new(120.0, 18.0, b(55.0, 152.0)).unwrap();
        let dem = TruncNormModel::new(90.0, 40.0, b(55.0, 278.0)).unwrap();
        let ct = trace(&draw(&cap, 300, 1));
        let dt = ObservationTrace::new(draw(&dem, 300, 2), b(55.0, 278.0)).unwrap();
        let f = fit_device("w", &ct, &dt).unwrap();
        assert_eq!(f.device.label(), "w");
        assert_eq!(f.capacity, fit_truncnorm_mle(&ct).unwrap());
        assert_eq!(*f.device.demand(), Marginal::TruncNorm(f.demand.model));
        assert!(f.converged());
        assert!(fit_device("w", &trace(&[60.0]), &dt).is_err());
    }

    #[test]
    fn trace_serde_round_trip() {
        let t = trace(&[60.0, 70.0]);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"samples":[60.0,70.0],"bounds":[55.0,152.0]}"#);
        assert_eq!(serde_json::from_str::<ObservationTrace>(&json).unwrap(), t);
        assert!(serde_json::from_str::<ObservationTrace>(r#"{"samples":[10.0],"bounds":[55.0,152.0]}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn likelihood_never_decreases_from_start(
            lo in 1.0f64..200.0,
            width in 1.0f64..300.0,
            loc in -0.5f64..1.5,
            scale in 0.02f64..3.0,
            n in 2usize..300,
            seed in any::<u64>(),
        ) {
            let bounds = b(lo, lo + width);
            let model = TruncNormModel::new(lo + loc * width, scale * width, bounds);
            prop_assume!(model.is_ok());
            let model = model.unwrap();
            let xs = draw(&model, n, seed);
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let t = ObservationTrace::new(xs.clone(), bounds).unwrap();
            let (m0, s0) = moments_init(&t);
            let start = truncnorm_loglik(&xs, bounds, m0, s0);
            let fit = fit_truncnorm_mle(&t).unwrap();
            prop_assert!(fit.loglik >= start - 1e-9 * start.abs().max(1.0));
            prop_assert_eq!(fit.converged, fit.gradient_norm <= CONVERGENCE_TOL);
        }
    }
}
