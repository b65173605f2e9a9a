//! Reliability of multi-device configurations.
//!
//! Device successes are independent. A series configuration needs every
//! device, a parallel one needs any device, and a partitioned one needs every
//! device to meet its reduced threshold α_i·Θ.

mod partition;
mod selection;

pub use partition::{optimize_partition, marginal_log_decay, PartitionMethod, PartitionSolution};
pub use selection::{
    max_series_devices, min_parallel_devices, parallel_worst_case_bound, select_parallel, select_series,
    SelectionMode, SelectionResult,
};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reliability::{reliability, DeviceModel, QosThreshold, ReliabilityError};

/// Tolerance on Σα = 1.
pub const ALLOCATION_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("device pool is empty")]
    EmptyPool,
    #[error("duplicate device label '{0}'")]
    DuplicateLabel(String),
    #[error("expected {expected} values (one per device), got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("reliability must lie in [0, 1], got {0}")]
    InvalidReliability(f64),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("partition solver did not converge; best allocation {best:?} reaches {reliability}")]
    NonConvergence { best: Vec<f64>, reliability: f64 },
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
}

/// Ordered collection of devices with unique labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoolSpec", into = "PoolSpec")]
pub struct DevicePool {
    devices: Vec<DeviceModel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolSpec {
    devices: Vec<DeviceModel>,
}

impl TryFrom<PoolSpec> for DevicePool {
    type Error = SystemError;

    fn try_from(s: PoolSpec) -> Result<Self, SystemError> {
        DevicePool::new(s.devices)
    }
}

impl From<DevicePool> for PoolSpec {
    fn from(p: DevicePool) -> Self {
        PoolSpec { devices: p.devices }
    }
}

impl DevicePool {
    pub fn new(devices: Vec<DeviceModel>) -> Result<Self, SystemError> {
        if devices.is_empty() {
            return Err(SystemError::EmptyPool);
        }
        let mut seen = HashSet::new();
        for d in &devices {
            if !seen.insert(d.label()) {
                return Err(SystemError::DuplicateLabel(d.label().to_string()));
            }
        }
        Ok(Self { devices })
    }

    /// `n` copies of one device labelled `{label}-0`, `{label}-1`, ...
    pub fn homogeneous(device: &DeviceModel, n: usize) -> Result<Self, SystemError> {
        Self::new((0..n).map(|i| device.clone().with_label(format!("{}-{i}", device.label()))).collect())
    }

    pub fn devices(&self) -> &[DeviceModel] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.devices.iter().map(|d| d.label()).collect()
    }

    /// A pool of the first `n` devices.
    pub fn truncated(&self, n: usize) -> Result<Self, SystemError> {
        Self::new(self.devices[..n.min(self.len())].to_vec())
    }

    /// R_i(Θ) for every device, in pool order.
    pub fn reliabilities(&self, theta: QosThreshold) -> Result<Vec<f64>, SystemError> {
        self.devices
            .par_iter()
            .map(|d| reliability(d, theta).map_err(SystemError::from))
            .collect()
    }
}

/// Workload fractions α_i, aligned with a pool; all positive, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AllocationSpec", into = "AllocationSpec")]
pub struct Allocation {
    fractions: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocationSpec {
    fractions: Vec<f64>,
}

impl TryFrom<AllocationSpec> for Allocation {
    type Error = SystemError;

    fn try_from(s: AllocationSpec) -> Result<Self, SystemError> {
        Allocation::new(s.fractions)
    }
}

impl From<Allocation> for AllocationSpec {
    fn from(a: Allocation) -> Self {
        AllocationSpec { fractions: a.fractions }
    }
}

impl Allocation {
    pub fn new(fractions: Vec<f64>) -> Result<Self, SystemError> {
        if fractions.is_empty() {
            return Err(SystemError::InvalidAllocation("no fractions".into()));
        }
        if let Some((i, a)) = fractions.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a > 0.0)) {
            return Err(SystemError::InvalidAllocation(format!("fraction {i} = {a} is not positive")));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > ALLOCATION_SUM_TOL {
            return Err(SystemError::InvalidAllocation(format!("fractions sum to {sum}, not 1")));
        }
        Ok(Self { fractions })
    }

    /// Rescales positive weights to sum to one.
    pub fn normalized(weights: &[f64]) -> Result<Self, SystemError> {
        let sum: f64 = weights.iter().sum();
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn equal(n: usize) -> Result<Self, SystemError> {
        if n == 0 {
            return Err(SystemError::EmptyPool);
        }
        Ok(Self { fractions: vec![1.0 / n as f64; n] })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }
}

fn check_len(pool: &DevicePool, got: usize) -> Result<(), SystemError> {
    if pool.len() != got {
        return Err(SystemError::LengthMismatch { expected: pool.len(), got });
    }
    Ok(())
}

/// Π_i R_i(Θ_i), one threshold per device.
pub fn series_reliability(pool: &DevicePool, thetas: &[QosThreshold]) -> Result<f64, SystemError> {
    check_len(pool, thetas.len())?;
    let rs: Vec<f64> = pool
        .devices
        .par_iter()
        .zip(thetas.par_iter())
        .map(|(d, &t)| reliability(d, t))
        .collect::<Result<_, _>>()?;
    Ok(rs.iter().product())
}

/// 1 − Π_i (1 − R_i(Θ)) for a replicated workload.
pub fn parallel_reliability(pool: &DevicePool, theta: QosThreshold) -> Result<f64, SystemError> {
    let rs = pool.reliabilities(theta)?;
    Ok(1.0 - rs.iter().map(|r| 1.0 - r).product::<f64>())
}

/// Π_i R_i(α_i Θ).
pub fn partitioned_reliability(pool: &DevicePool, alloc: &Allocation, theta: QosThreshold) -> Result<f64, SystemError> {
    check_len(pool, alloc.len())?;
    let thetas = alloc
        .fractions
        .iter()
        .map(|&a| theta.share(a))
        .collect::<Result<Vec<_>, _>>()?;
    series_reliability(pool, &thetas)
}
