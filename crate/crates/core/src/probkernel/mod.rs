//! Probability primitives: bounded intervals, the uniform and truncated normal
//! families, and seeded sampling.
//!
//! All model types are immutable after construction and `Send + Sync`.

pub mod normal;
pub mod rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use normal::{std_normal_cdf, std_normal_mass, std_normal_pdf, std_normal_quantile, std_normal_sf};
pub use rng::SimRng;

/// Construction of a truncated normal fails when the parent normal puts less
/// than this much mass inside the bounds.
pub const NORMALIZER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("bounds must be finite with lo < hi, got [{lo}, {hi}]")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("bounds [{lo}, {hi}] must be strictly positive for a physical rate")]
    NonPositiveBounds { lo: f64, hi: f64 },
    #[error("sigma must be finite and > 0, got {0}")]
    InvalidSigma(f64),
    #[error("mu must be finite, got {0}")]
    InvalidMu(f64),
    #[error("truncated normal normalizer {z:e} is below the floor {NORMALIZER_FLOOR:e} (mu={mu}, sigma={sigma}, bounds=[{lo}, {hi}])")]
    NormalizerUnderflow { mu: f64, sigma: f64, lo: f64, hi: f64, z: f64 },
}

/// A closed interval `[lo, hi]` with `lo < hi`.
///
/// `Bounds` itself only requires finiteness and strict ordering; the
/// reliability layer additionally requires `lo > 0` via [`Bounds::physical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Bounds {
    lo: f64,
    hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ModelError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ModelError::InvalidBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Bounds for a capacity or demand rate: finite, ordered and positive.
    pub fn physical(lo: f64, hi: f64) -> Result<Self, ModelError> {
        let b = Self::new(lo, hi)?;
        b.check_physical()?;
        Ok(b)
    }

    pub fn check_physical(&self) -> Result<(), ModelError> {
        if self.lo <= 0.0 {
            return Err(ModelError::NonPositiveBounds { lo: self.lo, hi: self.hi });
        }
        Ok(())
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn range(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Both endpoints multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> Result<Self, ModelError> {
        Self::new(self.lo * k, self.hi * k)
    }
}

impl TryFrom<[f64; 2]> for Bounds {
    type Error = ModelError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Bounds::new(v[0], v[1])
    }
}

impl From<Bounds> for [f64; 2] {
    fn from(b: Bounds) -> Self {
        [b.lo, b.hi]
    }
}

/// Shared surface of the two bounded families.
pub trait BoundedDistribution {
    fn bounds(&self) -> Bounds;
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    /// P(X ≥ x), computed without cancellation where the family allows it.
    fn sf(&self, x: f64) -> f64;
    /// Inverse CDF on (0, 1).
    fn quantile(&self, u: f64) -> f64;
    fn mean(&self) -> f64;

    fn sample_one(&self, rng: &mut SimRng) -> f64 {
        self.quantile(rng.next_open01())
    }

    /// `n` draws by inverse-CDF transform; deterministic for a given stream.
    fn sample(&self, rng: &mut SimRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformModel {
    pub bounds: Bounds,
}

impl UniformModel {
    pub fn new(bounds: Bounds) -> Self {
        Self { bounds }
    }

    pub fn variance(&self) -> f64 {
        self.bounds.range().powi(2) / 12.0
    }
}

impl BoundedDistribution for UniformModel {
    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn pdf(&self, x: f64) -> f64 {
        if self.bounds.contains(x) {
            1.0 / self.bounds.range()
        } else {
            0.0
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        ((x - self.bounds.lo) / self.bounds.range()).clamp(0.0, 1.0)
    }

    fn sf(&self, x: f64) -> f64 {
        ((self.bounds.hi - x) / self.bounds.range()).clamp(0.0, 1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.bounds.clamp(self.bounds.lo + u * self.bounds.range())
    }

    fn mean(&self) -> f64 {
        self.bounds.midpoint()
    }
}

/// Normal(mu, sigma²) restricted to `bounds` and renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruncNormSpec", into = "TruncNormSpec")]
pub struct TruncNormModel {
    mu: f64,
    sigma: f64,
    bounds: Bounds,
    // standardized bounds and the normalizer, cached
    alpha: f64,
    beta: f64,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct TruncNormSpec {
    mu: f64,
    sigma: f64,
    bounds: Bounds,
}

impl TryFrom<TruncNormSpec> for TruncNormModel {
    type Error = ModelError;

    fn try_from(s: TruncNormSpec) -> Result<Self, Self::Error> {
        TruncNormModel::new(s.mu, s.sigma, s.bounds)
    }
}

impl From<TruncNormModel> for TruncNormSpec {
    fn from(m: TruncNormModel) -> Self {
        TruncNormSpec { mu: m.mu, sigma: m.sigma, bounds: m.bounds }
    }
}

impl TruncNormModel {
    pub fn new(mu: f64, sigma: f64, bounds: Bounds) -> Result<Self, ModelError> {
        if !mu.is_finite() {
            return Err(ModelError::InvalidMu(mu));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::InvalidSigma(sigma));
        }
        let alpha = (bounds.lo() - mu) / sigma;
        let beta = (bounds.hi() - mu) / sigma;
        let z = std_normal_mass(alpha, beta);
        if z.is_nan() || z < NORMALIZER_FLOOR {
            return Err(ModelError::NormalizerUnderflow {
                mu,
                sigma,
                lo: bounds.lo(),
                hi: bounds.hi(),
                z,
            });
        }
        Ok(Self { mu, sigma, bounds, alpha, beta, z })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Z = Φ(β) − Φ(α).
    pub fn normalizer(&self) -> f64 {
        self.z
    }

    /// Standardized truncation points (α, β).
    pub fn standardized_bounds(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    fn standardize(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    pub fn variance(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let (pa, pb) = (std_normal_pdf(a), std_normal_pdf(b));
        // a·φ(a) is 0 when a is infinite; the bounds here are always finite
        let d = (pa - pb) / self.z;
        let e = (a * pa - b * pb) / self.z;
        self.sigma * self.sigma * (1.0 + e - d * d)
    }
}

impl BoundedDistribution for TruncNormModel {
    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn pdf(&self, x: f64) -> f64 {
        if !self.bounds.contains(x) {
            return 0.0;
        }
        std_normal_pdf(self.standardize(x)) / (self.sigma * self.z)
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.bounds.lo() {
            return 0.0;
        }
        if x >= self.bounds.hi() {
            return 1.0;
        }
        (std_normal_mass(self.alpha, self.standardize(x)) / self.z).clamp(0.0, 1.0)
    }

    fn sf(&self, x: f64) -> f64 {
        if x <= self.bounds.lo() {
            return 1.0;
        }
        if x >= self.bounds.hi() {
            return 0.0;
        }
        (std_normal_mass(self.standardize(x), self.beta) / self.z).clamp(0.0, 1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        // Work from whichever truncation point keeps the target probability
        // away from 1 so Φ⁻¹ keeps full precision.
        let lower = std_normal_cdf(self.alpha) + u * self.z;
        let x = if lower <= 0.5 {
            std_normal_quantile(lower)
        } else {
            let upper = std_normal_sf(self.beta) + (1.0 - u) * self.z;
            -std_normal_quantile(upper)
        };
        self.bounds.clamp(self.mu + self.sigma * x)
    }

    fn mean(&self) -> f64 {
        let d = (std_normal_pdf(self.alpha) - std_normal_pdf(self.beta)) / self.z;
        self.bounds.clamp(self.mu + self.sigma * d)
    }
}

/// Either family; the marginal of one side (capacity or demand) of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform(UniformModel),
    #[serde(rename = "truncnorm")]
    TruncNorm(TruncNormModel),
}

impl Marginal {
    pub fn uniform(bounds: Bounds) -> Self {
        Marginal::Uniform(UniformModel::new(bounds))
    }

    pub fn truncnorm(mu: f64, sigma: f64, bounds: Bounds) -> Result<Self, ModelError> {
        Ok(Marginal::TruncNorm(TruncNormModel::new(mu, sigma, bounds)?))
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Marginal::Uniform(_))
    }

    /// Same family with every location/scale parameter multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, ModelError> {
        match self {
            Marginal::Uniform(u) => Ok(Marginal::uniform(u.bounds.scaled(k)?)),
            Marginal::TruncNorm(t) => Marginal::truncnorm(t.mu * k, t.sigma * k, t.bounds.scaled(k)?),
        }
    }

    /// Characteristic widths of the density used to seed quadrature
    /// breakpoints: the location plus a few scales either side.
    pub(crate) fn feature_points(&self) -> Vec<f64> {
        match self {
            Marginal::Uniform(_) => Vec::new(),
            Marginal::TruncNorm(t) => [-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0]
                .iter()
                .map(|k| t.mu + k * t.sigma)
                .collect(),
        }
    }
}

impl BoundedDistribution for Marginal {
    fn bounds(&self) -> Bounds {
        match self {
            Marginal::Uniform(m) => m.bounds(),
            Marginal::TruncNorm(m) => m.bounds(),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Uniform(m) => m.pdf(x),
            Marginal::TruncNorm(m) => m.pdf(x),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Uniform(m) => m.cdf(x),
            Marginal::TruncNorm(m) => m.cdf(x),
        }
    }

    fn sf(&self, x: f64) -> f64 {
        match self {
            Marginal::Uniform(m) => m.sf(x),
            Marginal::TruncNorm(m) => m.sf(x),
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Uniform(m) => m.quantile(u),
            Marginal::TruncNorm(m) => m.quantile(u),
        }
    }

    fn mean(&self) -> f64 {
        match self {
            Marginal::Uniform(m) => m.mean(),
            Marginal::TruncNorm(m) => m.mean(),
        }
    }
}

impl From<UniformModel> for Marginal {
    fn from(m: UniformModel) -> Self {
        Marginal::Uniform(m)
    }
}

impl From<TruncNormModel> for Marginal {
    fn from(m: TruncNormModel) -> Self {
        Marginal::TruncNorm(m)
    }
}
