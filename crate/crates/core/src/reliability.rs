//! Single-device computational reliability, R(Θ) = P(C / Δ ≥ Θ).
//!
//! Two evaluation paths:
//!
//! * both marginals uniform (minimal-information regime): exact closed form,
//!   obtained by splitting the demand range at C_min/Θ and C_max/Θ into a
//!   probability-one strip, a linear strip and a probability-zero strip;
//! * anything else (historical regime, or mixed): one-dimensional adaptive
//!   quadrature of f_Δ(δ) · P(C ≥ max(C_min, Θδ)) over the demand support.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probkernel::{std_normal_cdf, std_normal_pdf, BoundedDistribution, Bounds, Marginal, ModelError};
use crate::quadrature::{integrate, QuadConfig, QuadError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReliabilityError {
    #[error("QoS threshold must be finite and > 0, got {0}")]
    InvalidTheta(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("reliability quadrature failed for device '{label}' at theta={theta}: {source}")]
    Quadrature {
        label: String,
        theta: f64,
        #[source]
        source: QuadError,
    },
    #[error("theta grid: {0}")]
    InvalidGrid(String),
    #[error("at theta={theta}: {source}")]
    AtTheta {
        theta: f64,
        #[source]
        source: Box<ReliabilityError>,
    },
}

/// Minimum acceptable capacity-to-demand ratio; the target frame rate in the
/// streaming interpretation. Values in (0, 1) are accepted.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QosThreshold(f64);

impl QosThreshold {
    pub fn new(theta: f64) -> Result<Self, ReliabilityError> {
        if theta.is_finite() && theta > 0.0 {
            Ok(Self(theta))
        } else {
            Err(ReliabilityError::InvalidTheta(theta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The reduced threshold `share · Θ` faced by a device carrying a fraction
    /// of the workload.
    pub fn share(self, fraction: f64) -> Result<Self, ReliabilityError> {
        Self::new(self.0 * fraction)
    }
}

impl TryFrom<f64> for QosThreshold {
    type Error = ReliabilityError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        QosThreshold::new(v)
    }
}

impl From<QosThreshold> for f64 {
    fn from(t: QosThreshold) -> f64 {
        t.0
    }
}

/// Capacity and demand marginals of one worker, independent by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeviceSpec", into = "DeviceSpec")]
pub struct DeviceModel {
    label: String,
    capacity: Marginal,
    demand: Marginal,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceSpec {
    label: String,
    capacity: Marginal,
    demand: Marginal,
}

impl TryFrom<DeviceSpec> for DeviceModel {
    type Error = ReliabilityError;

    fn try_from(s: DeviceSpec) -> Result<Self, Self::Error> {
        DeviceModel::new(s.label, s.capacity, s.demand)
    }
}

impl From<DeviceModel> for DeviceSpec {
    fn from(d: DeviceModel) -> Self {
        DeviceSpec { label: d.label, capacity: d.capacity, demand: d.demand }
    }
}

impl DeviceModel {
    pub fn new(label: impl Into<String>, capacity: Marginal, demand: Marginal) -> Result<Self, ReliabilityError> {
        capacity.bounds().check_physical()?;
        demand.bounds().check_physical()?;
        Ok(Self { label: label.into(), capacity, demand })
    }

    /// A device known only through its declared bounds.
    pub fn minimal_information(
        label: impl Into<String>,
        capacity: Bounds,
        demand: Bounds,
    ) -> Result<Self, ReliabilityError> {
        Self::new(label, Marginal::uniform(capacity), Marginal::uniform(demand))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn capacity(&self) -> &Marginal {
        &self.capacity
    }

    pub fn demand(&self) -> &Marginal {
        &self.demand
    }

    pub fn is_minimal_information(&self) -> bool {
        self.capacity.is_uniform() && self.demand.is_uniform()
    }

    /// Largest Θ at which the device is certain to succeed: C_min / Δ_max.
    pub fn saturation_threshold(&self) -> f64 {
        self.capacity.bounds().lo() / self.demand.bounds().hi()
    }

    /// Smallest Θ at which the device is certain to fail: C_max / Δ_min.
    pub fn cutoff_threshold(&self) -> f64 {
        self.capacity.bounds().hi() / self.demand.bounds().lo()
    }

    /// The same device with every capacity and demand parameter times `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, ReliabilityError> {
        Self::new(self.label.clone(), self.capacity.scaled(k)?, self.demand.scaled(k)?)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Demand-axis breakpoints a = clamp(C_min/Θ) and b = clamp(C_max/Θ).
fn strip_limits(capacity: Bounds, demand: Bounds, theta: f64) -> (f64, f64) {
    let a = demand.clamp(capacity.lo() / theta);
    let b = demand.clamp(capacity.hi() / theta);
    (a, b)
}

/// Exact reliability for uniform capacity and uniform demand, valid for every
/// ordering of Δ_min, Δ_max, C_min/Θ and C_max/Θ.
pub fn reliability_mi(capacity: Bounds, demand: Bounds, theta: QosThreshold) -> f64 {
    let t = theta.value();
    if t <= capacity.lo() / demand.hi() {
        return 1.0;
    }
    if t >= capacity.hi() / demand.lo() {
        return 0.0;
    }
    let (a, b) = strip_limits(capacity, demand, t);
    let (c_range, d_range) = (capacity.range(), demand.range());
    // ∫[Δmin,a] C_range dδ + ∫[a,b] (C_max − Θδ) dδ
    let sure = c_range * (a - demand.lo());
    let linear = (b - a) * (capacity.hi() - 0.5 * t * (a + b));
    ((sure + linear) / (c_range * d_range)).clamp(0.0, 1.0)
}

/// dR/dΘ for the uniform/uniform case: −(b² − a²) / (2 C_range Δ_range).
pub fn reliability_mi_derivative(capacity: Bounds, demand: Bounds, theta: QosThreshold) -> f64 {
    let (a, b) = strip_limits(capacity, demand, theta.value());
    -(b - a) * (b + a) / (2.0 * capacity.range() * demand.range())
}

/// The published closed form for the uniform case. Only defined when
/// Θ·Δ_min ≥ C_min (capacity floor never binds) and C_max/Θ ≥ Δ_min; returns
/// `None` otherwise.
pub fn reliability_mi_lemma1(capacity: Bounds, demand: Bounds, theta: QosThreshold) -> Option<f64> {
    let t = theta.value();
    let (c_max, d_min) = (capacity.hi(), demand.lo());
    if t * d_min < capacity.lo() || c_max / t < d_min {
        return None;
    }
    let d_upper = demand.hi().min(c_max / t);
    let antiderivative = |d: f64| c_max * d - 0.5 * t * d * d;
    Some((antiderivative(d_upper) - antiderivative(d_min)) / (capacity.range() * demand.range()))
}

fn quadrature_breakpoints(device: &DeviceModel, theta: f64) -> Vec<f64> {
    let mut pts = device.demand.feature_points();
    pts.extend(device.capacity.feature_points().into_iter().map(|c| c / theta));
    pts
}

/// Reliability by quadrature over the demand support. Works for any pair of
/// marginals; the capacity floor `max(C_min, Θδ)` is handled exactly, so no
/// assumption on Θ·Δ_min versus C_min is needed.
pub fn reliability_hist(device: &DeviceModel, theta: QosThreshold) -> Result<f64, ReliabilityError> {
    reliability_hist_with(device, theta, &QuadConfig::default())
}

pub fn reliability_hist_with(
    device: &DeviceModel,
    theta: QosThreshold,
    cfg: &QuadConfig,
) -> Result<f64, ReliabilityError> {
    let t = theta.value();
    let (cap, dem) = (&device.capacity, &device.demand);
    let (a, b) = strip_limits(cap.bounds(), dem.bounds(), t);
    // δ ≤ C_min/Θ: capacity always suffices
    let sure = dem.cdf(a);
    let partial = if b > a {
        integrate(|d| dem.pdf(d) * cap.sf(t * d), &quadrature_breakpoints(device, t), a, b, cfg)
            .map_err(|source| ReliabilityError::Quadrature {
                label: device.label.clone(),
                theta: t,
                source,
            })?
            .value
    } else {
        0.0
    };
    Ok((sure + partial).clamp(0.0, 1.0))
}

/// The published split form for truncated-normal marginals:
///
/// R = [Φ(β_C)·Z_Δ − (1/σ_Δ) ∫ φ((δ−μ_Δ)/σ_Δ) Φ((Θδ−μ_C)/σ_C) dδ] / (Z_C Z_Δ)
///
/// Returns `Ok(None)` unless both marginals are truncated normal and
/// C_min ≤ Θδ ≤ C_max over the whole demand range (outside that band the
/// inner integral's limits cross and the form no longer holds).
pub fn reliability_hist_lemma2(device: &DeviceModel, theta: QosThreshold) -> Result<Option<f64>, ReliabilityError> {
    let (Marginal::TruncNorm(cap), Marginal::TruncNorm(dem)) = (&device.capacity, &device.demand) else {
        return Ok(None);
    };
    let t = theta.value();
    let (cb, db) = (cap.bounds(), dem.bounds());
    if t * db.lo() < cb.lo() || t * db.hi() > cb.hi() {
        return Ok(None);
    }
    let (_, beta_c) = cap.standardized_bounds();
    let cfg = QuadConfig { abs_tol: 1e-12, ..QuadConfig::default() };
    let inner = integrate(
        |d| std_normal_pdf((d - dem.mu()) / dem.sigma()) * std_normal_cdf((t * d - cap.mu()) / cap.sigma()),
        &quadrature_breakpoints(device, t),
        db.lo(),
        db.hi(),
        &cfg,
    )
    .map_err(|source| ReliabilityError::Quadrature { label: device.label.clone(), theta: t, source })?
    .value;
    let r = (std_normal_cdf(beta_c) * dem.normalizer() - inner / dem.sigma()) / (cap.normalizer() * dem.normalizer());
    Ok(Some(r))
}

/// Reliability through the path appropriate for the device's regime.
pub fn reliability(device: &DeviceModel, theta: QosThreshold) -> Result<f64, ReliabilityError> {
    if device.is_minimal_information() {
        Ok(reliability_mi(device.capacity.bounds(), device.demand.bounds(), theta))
    } else {
        reliability_hist(device, theta)
    }
}

/// [`reliability`] with an explicit quadrature configuration for the
/// non-uniform path.
pub fn reliability_with(device: &DeviceModel, theta: QosThreshold, cfg: &QuadConfig) -> Result<f64, ReliabilityError> {
    if device.is_minimal_information() {
        Ok(reliability_mi(device.capacity.bounds(), device.demand.bounds(), theta))
    } else {
        reliability_hist_with(device, theta, cfg)
    }
}

/// dR/dΘ. Closed form in the uniform case; otherwise
/// −∫ f_Δ(δ) f_C(Θδ) δ dδ over the band where C_min < Θδ < C_max.
pub fn reliability_derivative(device: &DeviceModel, theta: QosThreshold) -> Result<f64, ReliabilityError> {
    let (cap, dem) = (&device.capacity, &device.demand);
    if device.is_minimal_information() {
        return Ok(reliability_mi_derivative(cap.bounds(), dem.bounds(), theta));
    }
    let t = theta.value();
    let (a, b) = strip_limits(cap.bounds(), dem.bounds(), t);
    if b <= a {
        return Ok(0.0);
    }
    let cfg = QuadConfig { abs_tol: 1e-13, rel_tol: 1e-11, ..QuadConfig::default() };
    let v = integrate(|d| dem.pdf(d) * cap.pdf(t * d) * d, &quadrature_breakpoints(device, t), a, b, &cfg)
        .map_err(|source| ReliabilityError::Quadrature { label: device.label.clone(), theta: t, source })?
        .value;
    Ok(-v)
}

/// Inclusive `start:stop:step` grid; `stop` is included when it lies on the
/// grid within 1e-9 steps.
pub fn theta_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, ReliabilityError> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(ReliabilityError::InvalidGrid(format!("bad range {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return Err(ReliabilityError::InvalidGrid(format!("{n} points is too many")));
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

pub(crate) fn check_grid(thetas: &[f64]) -> Result<(), ReliabilityError> {
    if thetas.is_empty() {
        return Err(ReliabilityError::InvalidGrid("empty grid".into()));
    }
    if let Some(w) = thetas.windows(2).find(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
        return Err(ReliabilityError::InvalidGrid(format!(
            "grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `(Θ, R(Θ))` over a strictly increasing grid. Points are evaluated in
/// parallel and returned in grid order. Quadrature noise (below tolerance) is
/// absorbed with a running minimum so the curve is nonincreasing.
pub fn reliability_curve(device: &DeviceModel, thetas: &[f64]) -> Result<Vec<(f64, f64)>, ReliabilityError> {
    check_grid(thetas)?;
    let values: Vec<f64> = thetas
        .par_iter()
        .map(|&t| {
            QosThreshold::new(t)
                .and_then(|q| reliability(device, q))
                .map_err(|e| ReliabilityError::AtTheta { theta: t, source: Box::new(e) })
        })
        .collect::<Result<_, _>>()?;
    let mut running = f64::INFINITY;
    Ok(thetas
        .iter()
        .zip(values)
        .map(|(&t, r)| {
            running = running.min(r);
            (t, running)
        })
        .collect())
}
