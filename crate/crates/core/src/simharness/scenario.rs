//! Versioned JSON scenario files and the scenarios shipped with the crate.

use serde::{Deserialize, Serialize};

use super::{CapacityProfile, CostModel, DeploymentConfig, SamplingLaw, SimError, TraceConfig};
use crate::reliability::{theta_grid, QosThreshold};

pub const SCHEMA_VERSION: u32 = 1;

/// Name and JSON text of every embedded scenario.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("fig2a", include_str!("../../scenarios/fig2a.json")),
    ("fig4a", include_str!("../../scenarios/fig4a.json")),
    ("fig6", include_str!("../../scenarios/fig6.json")),
    ("fig7", include_str!("../../scenarios/fig7.json")),
];

pub fn builtin_scenario(name: &str) -> Option<&'static str> {
    BUILTIN_SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Inclusive `start:stop:step` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl ThetaGrid {
    pub fn values(&self) -> Result<Vec<f64>, SimError> {
        Ok(theta_grid(self.start, self.stop, self.step)?)
    }
}

/// [`TraceConfig`] without the seed, which may come from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub thread_range: [u32; 2],
    pub scale_range: [f64; 2],
    pub change_interval: u64,
    pub n_frames: u64,
    #[serde(default)]
    pub capacity_law: SamplingLaw,
    #[serde(default)]
    pub demand_law: SamplingLaw,
    #[serde(default)]
    pub tau_comm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub cost_model: CostModel,
    #[serde(default)]
    pub capacity_profile: CapacityProfile,
    pub trace: TraceSpec,
    /// QoS threshold that sets each frame's `met_qos` flag.
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<ThetaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment: Option<DeploymentConfig>,
}

impl Scenario {
    /// Schema version, threshold, grid and trace ranges.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.schema != SCHEMA_VERSION {
            return Err(SimError::UnsupportedSchema(self.schema));
        }
        QosThreshold::new(self.theta)?;
        if let Some(g) = &self.thetas {
            g.values()?;
        }
        self.trace_config(Some(self.seed.unwrap_or(0)))?.validate(&self.cost_model, &self.capacity_profile)
    }

    /// The trace with `seed` if given, otherwise the scenario's own seed.
    pub fn trace_config(&self, seed: Option<u64>) -> Result<TraceConfig, SimError> {
        let t = &self.trace;
        Ok(TraceConfig {
            thread_range: t.thread_range,
            scale_range: t.scale_range,
            change_interval: t.change_interval,
            n_frames: t.n_frames,
            seed: seed.or(self.seed).ok_or(SimError::MissingSeed)?,
            capacity_law: t.capacity_law,
            demand_law: t.demand_law,
            tau_comm: t.tau_comm,
        })
    }

    pub fn qos(&self) -> Result<QosThreshold, SimError> {
        Ok(QosThreshold::new(self.theta)?)
    }
}
