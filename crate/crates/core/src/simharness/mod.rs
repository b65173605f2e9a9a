//! Trace-driven emulation of a device running a streaming inference service.
//!
//! Capacity comes from a thread count mapped through a [`CapacityProfile`];
//! demand comes from a frame scale mapped through a quadratic [`CostModel`].
//! Both are resampled at the same frame boundary every `change_interval`
//! frames and held in between.
//!
//! Random streams for a seed: stream 0 drives capacity and stream 1 drives
//! demand in [`run_stream_sim`]. [`run_series_deployment`] reuses stream 1
//! for the shared demand and gives worker `i` capacity stream `2 + i`.

pub mod deployment;
pub mod scenario;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::sig9;
use crate::probkernel::{BoundedDistribution, Bounds, Marginal, ModelError, SimRng, TruncNormModel};
use crate::reliability::{DeviceModel, QosThreshold, ReliabilityError};

pub use deployment::{
    run_series_deployment, DeploymentConfig, DeploymentFrame, DeploymentReport, Partition, WorkerReport,
    TAU_COMM_PRESET_S,
};
pub use scenario::{builtin_scenario, Scenario, ThetaGrid, BUILTIN_SCENARIOS, SCHEMA_VERSION};

pub(crate) const CAPACITY_STREAM: u64 = 0;
pub(crate) const DEMAND_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("cost model needs finite gamma_ref > 0 and s_ref > 0, got gamma_ref={gamma_ref}, s_ref={s_ref}")]
    InvalidCostModel { gamma_ref: f64, s_ref: f64 },
    #[error("scale must be finite and > 0, got {0}")]
    InvalidScale(f64),
    #[error("invalid capacity profile: {0}")]
    InvalidProfile(String),
    #[error("thread count {threads} is outside the profile domain [{lo}, {hi}]")]
    OutsideProfile { threads: f64, lo: u32, hi: u32 },
    #[error("capacity {capacity} GFLOPS is outside the profile range [{lo}, {hi}]")]
    CapacityOutsideProfile { capacity: f64, lo: f64, hi: f64 },
    #[error("invalid range {name}: {detail}")]
    InvalidRange { name: &'static str, detail: String },
    #[error("change_interval must be >= 1")]
    InvalidInterval,
    #[error("n_frames must be >= 1")]
    NoFrames,
    #[error("truncnorm law needs finite loc and scale > 0, got loc={loc}, scale={scale}")]
    InvalidLaw { loc: f64, scale: f64 },
    #[error("invalid deployment: {0}")]
    InvalidDeployment(String),
    #[error("the frame record set is empty")]
    EmptyRecords,
    #[error("unsupported scenario schema {0}; this build reads schema {SCHEMA_VERSION}")]
    UnsupportedSchema(u32),
    #[error("no seed given on the command line or in the scenario")]
    MissingSeed,
    #[error("failed to write records: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
}

/// Per-frame cost Γ(s) = gamma_ref · (s / s_ref)² in GFLOPs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostModelSpec", into = "CostModelSpec")]
pub struct CostModel {
    gamma_ref: f64,
    s_ref: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostModelSpec {
    gamma_ref: f64,
    #[serde(default = "one")]
    s_ref: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<CostModelSpec> for CostModel {
    type Error = SimError;

    fn try_from(s: CostModelSpec) -> Result<Self, SimError> {
        CostModel::with_reference(s.gamma_ref, s.s_ref)
    }
}

impl From<CostModel> for CostModelSpec {
    fn from(c: CostModel) -> Self {
        Self { gamma_ref: c.gamma_ref, s_ref: c.s_ref }
    }
}

impl CostModel {
    /// Reference scale 1.0 (a 640×640 frame).
    pub fn new(gamma_ref: f64) -> Result<Self, SimError> {
        Self::with_reference(gamma_ref, 1.0)
    }

    pub fn with_reference(gamma_ref: f64, s_ref: f64) -> Result<Self, SimError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(gamma_ref) && ok(s_ref) {
            Ok(Self { gamma_ref, s_ref })
        } else {
            Err(SimError::InvalidCostModel { gamma_ref, s_ref })
        }
    }

    pub fn gamma_ref(&self) -> f64 {
        self.gamma_ref
    }

    pub fn s_ref(&self) -> f64 {
        self.s_ref
    }

    pub fn demand_of_scale(&self, s: f64) -> Result<f64, SimError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(SimError::InvalidScale(s));
        }
        let r = s / self.s_ref;
        Ok(self.gamma_ref * r * r)
    }

    /// Inverse of [`CostModel::demand_of_scale`].
    pub fn scale_of_demand(&self, gflops: f64) -> f64 {
        self.s_ref * (gflops / self.gamma_ref).sqrt()
    }
}

/// Monotone nondecreasing thread → GFLOPS table with linear interpolation
/// between entries and no extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileSpec", into = "ProfileSpec")]
pub struct CapacityProfile {
    entries: Vec<(u32, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ProfileSpec {
    /// C(n) = c_ref · (n / n_ref)^exponent tabulated on `threads`.
    PowerLaw { c_ref: f64, n_ref: f64, exponent: f64, threads: [u32; 2] },
    /// Power law through two (threads, GFLOPS) anchors.
    Anchored { anchors: [(f64, f64); 2], threads: [u32; 2] },
    Table { entries: Vec<(u32, f64)> },
}

impl TryFrom<ProfileSpec> for CapacityProfile {
    type Error = SimError;

    fn try_from(s: ProfileSpec) -> Result<Self, SimError> {
        match s {
            ProfileSpec::PowerLaw { c_ref, n_ref, exponent, threads } => {
                CapacityProfile::power_law(c_ref, n_ref, exponent, threads[0], threads[1])
            }
            ProfileSpec::Anchored { anchors, threads } => {
                CapacityProfile::anchored(anchors[0], anchors[1], threads[0], threads[1])
            }
            ProfileSpec::Table { entries } => CapacityProfile::table(entries),
        }
    }
}

impl From<CapacityProfile> for ProfileSpec {
    fn from(p: CapacityProfile) -> Self {
        ProfileSpec::Table { entries: p.entries }
    }
}

impl Default for CapacityProfile {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl CapacityProfile {
    pub fn table(mut entries: Vec<(u32, f64)>) -> Result<Self, SimError> {
        if entries.is_empty() {
            return Err(SimError::InvalidProfile("table is empty".into()));
        }
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(SimError::InvalidProfile(format!("duplicate thread count {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(SimError::InvalidProfile(format!(
                    "capacity decreases from {} threads to {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(e) = entries.iter().find(|e| !(e.1.is_finite() && e.1 > 0.0)) {
            return Err(SimError::InvalidProfile(format!("capacity at {} threads is {}", e.0, e.1)));
        }
        Ok(Self { entries })
    }

    pub fn power_law(c_ref: f64, n_ref: f64, exponent: f64, lo: u32, hi: u32) -> Result<Self, SimError> {
        if !(c_ref > 0.0 && n_ref > 0.0 && exponent.is_finite() && exponent >= 0.0 && c_ref.is_finite()) {
            return Err(SimError::InvalidProfile(format!(
                "power law needs c_ref > 0, n_ref > 0, exponent >= 0 (got {c_ref}, {n_ref}, {exponent})"
            )));
        }
        if lo == 0 || lo > hi {
            return Err(SimError::InvalidProfile(format!("thread domain [{lo}, {hi}] is empty or starts at 0")));
        }
        Self::table((lo..=hi).map(|n| (n, c_ref * (n as f64 / n_ref).powf(exponent))).collect())
    }

    /// The power law through `(n1, c1)` and `(n2, c2)`.
    pub fn anchored(a: (f64, f64), b: (f64, f64), lo: u32, hi: u32) -> Result<Self, SimError> {
        let (n1, c1) = a;
        let (n2, c2) = b;
        if !(n1 > 0.0 && n2 > 0.0 && n1 != n2 && c1 > 0.0 && c2 > 0.0) {
            return Err(SimError::InvalidProfile("anchors need distinct positive thread counts and capacities".into()));
        }
        Self::power_law(c1, n1, (c2 / c1).ln() / (n2 / n1).ln(), lo, hi)
    }

    /// Default profile: a power law with C(2) = 55 and C(6) = 152 GFLOPS,
    /// tabulated for 1..=16 threads.
    pub fn synthetic() -> Self {
        Self::anchored((2.0, 55.0), (6.0, 152.0), 1, 16).expect("constant anchors are valid")
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn domain(&self) -> (u32, u32) {
        (self.entries[0].0, self.entries[self.entries.len() - 1].0)
    }

    pub fn capacity(&self, threads: f64) -> Result<f64, SimError> {
        let (lo, hi) = self.domain();
        if !(threads >= lo as f64 && threads <= hi as f64) {
            return Err(SimError::OutsideProfile { threads, lo, hi });
        }
        let k = self.entries.partition_point(|e| (e.0 as f64) <= threads);
        if k == self.entries.len() {
            return Ok(self.entries[k - 1].1);
        }
        let (n0, c0) = self.entries[k - 1];
        let (n1, c1) = self.entries[k];
        let t = (threads - n0 as f64) / (n1 - n0) as f64;
        Ok(c0 + t * (c1 - c0))
    }

    /// Smallest thread count (fractional) whose interpolated capacity is `c`.
    pub fn threads_for(&self, c: f64) -> Result<f64, SimError> {
        let first = self.entries[0];
        let last = self.entries[self.entries.len() - 1];
        if !(c >= first.1 && c <= last.1) {
            return Err(SimError::CapacityOutsideProfile { capacity: c, lo: first.1, hi: last.1 });
        }
        let k = self.entries.partition_point(|e| e.1 < c);
        if k == 0 {
            return Ok(first.0 as f64);
        }
        let (n0, c0) = self.entries[k - 1];
        let (n1, c1) = self.entries[k];
        Ok(n0 as f64 + (n1 - n0) as f64 * (c - c0) / (c1 - c0))
    }
}

/// How a knob's value is drawn at each change boundary.
///
/// `uniform` and `truncnorm` act on the induced GFLOPS value (so the modelled
/// marginal is exactly uniform or truncated normal on the GFLOPS bounds) and
/// recover the knob by inverting the profile or cost model. `uniform_knob`
/// draws the knob itself: an integer thread count or a continuous scale.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingLaw {
    #[default]
    Uniform,
    UniformKnob,
    /// Location and scale as fractions of the GFLOPS range, measured from `lo`.
    Truncnorm { loc: f64, scale: f64 },
}

impl SamplingLaw {
    fn validate(&self) -> Result<(), SimError> {
        match *self {
            SamplingLaw::Truncnorm { loc, scale } if !(loc.is_finite() && scale.is_finite() && scale > 0.0) => {
                Err(SimError::InvalidLaw { loc, scale })
            }
            _ => Ok(()),
        }
    }

    /// The GFLOPS marginal this law induces on `[lo, hi]`.
    fn marginal(&self, lo: f64, hi: f64) -> Result<Marginal, SimError> {
        let b = Bounds::physical(lo, hi)?;
        Ok(match *self {
            SamplingLaw::Truncnorm { loc, scale } => {
                Marginal::truncnorm(lo + loc * b.range(), scale * b.range(), b)?
            }
            _ => Marginal::uniform(b),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub thread_range: [u32; 2],
    pub scale_range: [f64; 2],
    pub change_interval: u64,
    pub n_frames: u64,
    pub seed: u64,
    #[serde(default)]
    pub capacity_law: SamplingLaw,
    #[serde(default)]
    pub demand_law: SamplingLaw,
    /// Constant per-frame overhead in seconds added to inference time.
    #[serde(default)]
    pub tau_comm: f64,
}

impl TraceConfig {
    /// Uniform laws, no communication overhead.
    pub fn new(thread_range: [u32; 2], scale_range: [f64; 2], change_interval: u64, n_frames: u64, seed: u64) -> Self {
        Self {
            thread_range,
            scale_range,
            change_interval,
            n_frames,
            seed,
            capacity_law: SamplingLaw::Uniform,
            demand_law: SamplingLaw::Uniform,
            tau_comm: 0.0,
        }
    }

    pub fn validate(&self, cm: &CostModel, profile: &CapacityProfile) -> Result<(), SimError> {
        let [t0, t1] = self.thread_range;
        if t0 > t1 {
            return Err(SimError::InvalidRange { name: "thread_range", detail: format!("[{t0}, {t1}] is reversed") });
        }
        profile.capacity(t0 as f64)?;
        profile.capacity(t1 as f64)?;
        let [s0, s1] = self.scale_range;
        if !(s0.is_finite() && s1.is_finite() && s0 > 0.0 && s0 <= s1) {
            return Err(SimError::InvalidRange {
                name: "scale_range",
                detail: format!("[{s0}, {s1}] must satisfy 0 < lo <= hi"),
            });
        }
        cm.demand_of_scale(s0)?;
        if self.change_interval == 0 {
            return Err(SimError::InvalidInterval);
        }
        if self.n_frames == 0 {
            return Err(SimError::NoFrames);
        }
        if !(self.tau_comm.is_finite() && self.tau_comm >= 0.0) {
            return Err(SimError::InvalidRange { name: "tau_comm", detail: format!("{} must be >= 0", self.tau_comm) });
        }
        self.capacity_law.validate()?;
        self.demand_law.validate()
    }

    pub fn capacity_range(&self, profile: &CapacityProfile) -> Result<(f64, f64), SimError> {
        Ok((profile.capacity(self.thread_range[0] as f64)?, profile.capacity(self.thread_range[1] as f64)?))
    }

    pub fn demand_range(&self, cm: &CostModel) -> Result<(f64, f64), SimError> {
        Ok((cm.demand_of_scale(self.scale_range[0])?, cm.demand_of_scale(self.scale_range[1])?))
    }

    /// Number of resampling intervals, i.e. independent (C, Δ) pairs.
    pub fn n_intervals(&self) -> u64 {
        self.n_frames.div_ceil(self.change_interval)
    }

    /// The device model whose marginals the trace samples from.
    ///
    /// For `uniform_knob` on threads the capacity law is discrete, so the
    /// returned uniform marginal only matches it in the bounds.
    pub fn induced_device(
        &self,
        label: &str,
        cm: &CostModel,
        profile: &CapacityProfile,
    ) -> Result<DeviceModel, SimError> {
        self.validate(cm, profile)?;
        let (c0, c1) = self.capacity_range(profile)?;
        let (d0, d1) = self.demand_range(cm)?;
        let demand = match self.demand_law {
            // uniform in scale gives a non-uniform Δ; only its bounds are modelled
            SamplingLaw::UniformKnob => Marginal::uniform(Bounds::physical(d0, d1)?),
            law => law.marginal(d0, d1)?,
        };
        Ok(DeviceModel::new(label, self.capacity_law.marginal(c0, c1)?, demand)?)
    }
}

/// One pair of knob and GFLOPS values.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Draw {
    pub knob: f64,
    pub gflops: f64,
}

fn truncnorm_in(lo: f64, hi: f64, loc: f64, scale: f64) -> Result<TruncNormModel, SimError> {
    let b = Bounds::new(lo, hi)?;
    Ok(TruncNormModel::new(lo + loc * b.range(), scale * b.range(), b)?)
}

/// Capacity draws, one per interval, for a thread range.
pub(crate) fn capacity_draws(
    range: [u32; 2],
    law: SamplingLaw,
    profile: &CapacityProfile,
    n: u64,
    rng: &mut SimRng,
) -> Result<Vec<Draw>, SimError> {
    let (t0, t1) = (range[0] as f64, range[1] as f64);
    let (c0, c1) = (profile.capacity(t0)?, profile.capacity(t1)?);
    let tn = match law {
        SamplingLaw::Truncnorm { loc, scale } if c0 < c1 => Some(truncnorm_in(c0, c1, loc, scale)?),
        _ => None,
    };
    (0..n)
        .map(|_| {
            let u = rng.next_open01();
            match law {
                SamplingLaw::UniformKnob => {
                    let width = (range[1] - range[0]) as f64 + 1.0;
                    let t = (t0 + (u * width).floor()).min(t1);
                    Ok(Draw { knob: t, gflops: profile.capacity(t)? })
                }
                _ => {
                    let c = match &tn {
                        Some(m) => m.quantile(u),
                        None => c0 + (c1 - c0) * u,
                    };
                    let c = c.clamp(c0, c1);
                    Ok(Draw { knob: profile.threads_for(c)?, gflops: c })
                }
            }
        })
        .collect()
}

/// Demand draws, one per interval, for a scale range.
pub(crate) fn demand_draws(
    range: [f64; 2],
    law: SamplingLaw,
    cm: &CostModel,
    n: u64,
    rng: &mut SimRng,
) -> Result<Vec<Draw>, SimError> {
    let (d0, d1) = (cm.demand_of_scale(range[0])?, cm.demand_of_scale(range[1])?);
    let tn = match law {
        SamplingLaw::Truncnorm { loc, scale } if d0 < d1 => Some(truncnorm_in(d0, d1, loc, scale)?),
        _ => None,
    };
    (0..n)
        .map(|_| {
            let u = rng.next_open01();
            Ok(match law {
                SamplingLaw::UniformKnob => {
                    let s = range[0] + (range[1] - range[0]) * u;
                    Draw { knob: s, gflops: cm.demand_of_scale(s)? }
                }
                _ => {
                    let d = match &tn {
                        Some(m) => m.quantile(u),
                        None => d0 + (d1 - d0) * u,
                    };
                    let d = d.clamp(d0, d1);
                    Draw { knob: cm.scale_of_demand(d), gflops: d }
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub threads: f64,
    pub scale: f64,
    pub capacity_gflops: f64,
    pub demand_gflops: f64,
    pub inference_s: f64,
    pub met_qos: bool,
}

impl FrameRecord {
    /// C ≥ Θ·Δ, the same predicate the Monte Carlo oracle uses.
    pub fn meets(&self, theta: f64) -> bool {
        self.capacity_gflops >= theta * self.demand_gflops
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub theta: f64,
    pub seed: u64,
    pub change_interval: u64,
    pub records: Vec<FrameRecord>,
    /// Fraction of frames with `met_qos`.
    pub empirical_reliability: f64,
    /// Mean over frames of 1 / inference time.
    pub mean_fps: f64,
}

/// Scalar part of a [`SimResult`], written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub theta: f64,
    pub seed: u64,
    pub n_frames: u64,
    pub n_intervals: u64,
    pub empirical_reliability: f64,
    pub mean_fps: f64,
}

pub const RECORD_HEADER: [&str; 7] =
    ["frame", "threads", "scale", "capacity_gflops", "demand_gflops", "inference_s", "met_qos"];

impl SimResult {
    pub fn n_frames(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn n_intervals(&self) -> u64 {
        self.n_frames().div_ceil(self.change_interval)
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            theta: self.theta,
            seed: self.seed,
            n_frames: self.n_frames(),
            n_intervals: self.n_intervals(),
            empirical_reliability: self.empirical_reliability,
            mean_fps: self.mean_fps,
        }
    }

    /// One row per frame; floats at 9 significant digits, `met_qos` as 0/1.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| SimError::Io(e.to_string());
        out.write_record(RECORD_HEADER).map_err(io)?;
        for r in &self.records {
            out.write_record([
                r.frame.to_string(),
                sig9(r.threads),
                sig9(r.scale),
                sig9(r.capacity_gflops),
                sig9(r.demand_gflops),
                sig9(r.inference_s),
                u8::from(r.met_qos).to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| SimError::Io(e.to_string()))
    }

    /// Every change-interval's first frame, as (capacity, demand) pairs.
    pub fn interval_samples(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .step_by(self.change_interval as usize)
            .map(|r| (r.capacity_gflops, r.demand_gflops))
            .collect()
    }
}

/// Runs the frame loop: resample (threads, scale) at every interval boundary,
/// then record C, Δ, Δ/C + τ_comm and C ≥ Θ·Δ for every frame.
pub fn run_stream_sim(
    cfg: &TraceConfig,
    cm: &CostModel,
    profile: &CapacityProfile,
    theta: QosThreshold,
) -> Result<SimResult, SimError> {
    cfg.validate(cm, profile)?;
    let n_int = cfg.n_intervals();
    let caps = capacity_draws(
        cfg.thread_range,
        cfg.capacity_law,
        profile,
        n_int,
        &mut SimRng::with_stream(cfg.seed, CAPACITY_STREAM),
    )?;
    let dems = demand_draws(
        cfg.scale_range,
        cfg.demand_law,
        cm,
        n_int,
        &mut SimRng::with_stream(cfg.seed, DEMAND_STREAM),
    )?;
    let t = theta.value();
    let records: Vec<FrameRecord> = (0..cfg.n_frames)
        .map(|frame| {
            let k = (frame / cfg.change_interval) as usize;
            let (c, d) = (caps[k], dems[k]);
            let mut r = FrameRecord {
                frame,
                threads: c.knob,
                scale: d.knob,
                capacity_gflops: c.gflops,
                demand_gflops: d.gflops,
                inference_s: d.gflops / c.gflops + cfg.tau_comm,
                met_qos: false,
            };
            r.met_qos = r.meets(t);
            r
        })
        .collect();
    let n = records.len() as f64;
    let met = records.iter().filter(|r| r.met_qos).count() as f64;
    let mean_fps = records.iter().map(|r| 1.0 / r.inference_s).sum::<f64>() / n;
    Ok(SimResult {
        theta: t,
        seed: cfg.seed,
        change_interval: cfg.change_interval,
        records,
        empirical_reliability: met / n,
        mean_fps,
    })
}

/// Fraction of frames with C ≥ Θ·Δ at each Θ.
pub fn empirical_reliability_curve(result: &SimResult, thetas: &[f64]) -> Result<Vec<(f64, f64)>, SimError> {
    empirical_fraction_curve(&result.records, thetas)
}

/// [`empirical_reliability_curve`] over an arbitrary subset of frames.
pub fn empirical_fraction_curve(records: &[FrameRecord], thetas: &[f64]) -> Result<Vec<(f64, f64)>, SimError> {
    if records.is_empty() {
        return Err(SimError::EmptyRecords);
    }
    let n = records.len() as f64;
    Ok(thetas
        .iter()
        .map(|&t| (t, records.iter().filter(|r| r.meets(t)).count() as f64 / n))
        .collect())
}

/// p ∓ 3·sqrt(p(1−p)/n), clipped to [0, 1].
pub fn binomial_band(p: f64, n: u64) -> (f64, f64) {
    let hw = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
    ((p - hw).max(0.0), (p + hw).min(1.0))
}
