//! Choosing how many of the most reliable candidates to use.

use serde::{Deserialize, Serialize};

use super::{DevicePool, SystemError};
use crate::reliability::QosThreshold;

/// Relative slack on the ε comparisons so that products equal to ε in exact
/// arithmetic are not rejected by rounding.
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Series,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mode: SelectionMode,
    pub epsilon: f64,
    pub n_star: usize,
    pub chosen_labels: Vec<String>,
    /// Configuration reliability of the chosen devices; when infeasible, the
    /// best value any subset can reach.
    pub achieved_reliability: f64,
    pub feasible: bool,
}

fn check_epsilon(epsilon: f64) -> Result<(), SystemError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(SystemError::InvalidEpsilon(epsilon))
    }
}

/// Sorts by reliability descending; equal reliabilities by label.
fn rank(candidates: &[(String, f64)]) -> Result<Vec<(String, f64)>, SystemError> {
    if let Some((_, r)) = candidates.iter().find(|(_, r)| !(0.0..=1.0).contains(r)) {
        return Err(SystemError::InvalidReliability(*r));
    }
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Largest N such that the N most reliable candidates in series still reach ε.
pub fn select_series(candidates: &[(String, f64)], epsilon: f64) -> Result<SelectionResult, SystemError> {
    check_epsilon(epsilon)?;
    let ranked = rank(candidates)?;
    let mut product = 1.0;
    let mut n_star = 0;
    for (_, r) in &ranked {
        let next = product * r;
        if next < epsilon * (1.0 - SLACK) {
            break;
        }
        product = next;
        n_star += 1;
    }
    let feasible = n_star > 0;
    Ok(SelectionResult {
        mode: SelectionMode::Series,
        epsilon,
        n_star,
        chosen_labels: ranked[..n_star].iter().map(|(l, _)| l.clone()).collect(),
        achieved_reliability: if feasible { product } else { ranked.first().map_or(0.0, |c| c.1) },
        feasible,
    })
}

/// Smallest N such that the N most reliable candidates in parallel reach ε.
pub fn select_parallel(candidates: &[(String, f64)], epsilon: f64) -> Result<SelectionResult, SystemError> {
    check_epsilon(epsilon)?;
    let ranked = rank(candidates)?;
    let target = (1.0 - epsilon) * (1.0 + SLACK);
    let mut failure = 1.0;
    let mut n_star = 0;
    for (i, (_, r)) in ranked.iter().enumerate() {
        failure *= 1.0 - r;
        if failure <= target {
            n_star = i + 1;
            break;
        }
    }
    let feasible = n_star > 0;
    Ok(SelectionResult {
        mode: SelectionMode::Parallel,
        epsilon,
        n_star,
        chosen_labels: ranked[..n_star].iter().map(|(l, _)| l.clone()).collect(),
        achieved_reliability: 1.0 - failure,
        feasible,
    })
}

fn labelled(candidates: &DevicePool, theta: QosThreshold) -> Result<Vec<(String, f64)>, SystemError> {
    let rs = candidates.reliabilities(theta)?;
    Ok(candidates.labels().into_iter().map(String::from).zip(rs).collect())
}

/// Series sizing over a candidate pool at a shared threshold.
pub fn max_series_devices(
    candidates: &DevicePool,
    theta: QosThreshold,
    epsilon: f64,
) -> Result<SelectionResult, SystemError> {
    check_epsilon(epsilon)?;
    select_series(&labelled(candidates, theta)?, epsilon)
}

/// Parallel sizing over a candidate pool at a shared threshold.
pub fn min_parallel_devices(
    candidates: &DevicePool,
    theta: QosThreshold,
    epsilon: f64,
) -> Result<SelectionResult, SystemError> {
    check_epsilon(epsilon)?;
    select_parallel(&labelled(candidates, theta)?, epsilon)
}

/// ⌈ln(1−ε) / ln(1−r_min)⌉: enough replicas when every device has at least
/// reliability `r_min`.
pub fn parallel_worst_case_bound(r_min: f64, epsilon: f64) -> Result<usize, SystemError> {
    check_epsilon(epsilon)?;
    if !(r_min > 0.0 && r_min < 1.0) {
        return Err(SystemError::InvalidReliability(r_min));
    }
    let n = ((1.0 - epsilon).ln() / (1.0 - r_min).ln() - 1e-9).ceil();
    Ok((n as usize).max(1))
}
