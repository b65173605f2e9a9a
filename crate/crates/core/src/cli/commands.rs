//! Subcommand arguments and handlers. Handlers build artifacts in memory; the
//! driver in the parent module writes them.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use super::emit::{json_bytes, CurveBundle, Format};
use super::sweeps::{self, SweepName};
use super::{CliError, Ctx};
use crate::estimation::{fit_truncnorm_mle, fit_truncnorm_mle_from, FitResult, ObservationTrace};
use crate::mcoracle::{mc_single_reliability, mc_system_reliability, Configuration, McEstimate};
use crate::probkernel::{Bounds, Marginal};
use crate::reliability::{reliability, reliability_curve, DeviceModel, QosThreshold};
use crate::simharness::{
    empirical_reliability_curve, run_series_deployment, run_stream_sim, Scenario, SimError, SimSummary,
};
use crate::system::{
    optimize_partition, parallel_reliability, parallel_worst_case_bound, partitioned_reliability,
    select_parallel, select_series, series_reliability, Allocation, DevicePool, PartitionSolution, SelectionResult,
};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reliability curve of one device over a threshold grid.
    Reliability(ReliabilityArgs),
    /// Truncated-normal maximum-likelihood fit of an observation trace.
    Fit(FitArgs),
    /// Reliability-maximizing workload split for a device pool.
    Partition(PartitionArgs),
    /// Series or parallel device selection for a target reliability.
    Select(SelectArgs),
    /// Frame-level simulation of a scenario file.
    Simulate(SimulateArgs),
    /// Monte Carlo estimate for a device or a pool configuration.
    Mc(McArgs),
    /// Reproduce a named experiment end to end.
    Sweep(SweepArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Reliability(_) => "reliability",
            Command::Fit(_) => "fit",
            Command::Partition(_) => "partition",
            Command::Select(_) => "select",
            Command::Simulate(_) => "simulate",
            Command::Mc(_) => "mc",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }

    pub fn writes_directory(&self) -> bool {
        matches!(self, Command::Sweep(_))
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            Command::Reliability(a) => a.out.as_deref(),
            Command::Fit(a) => a.out.as_deref(),
            Command::Partition(a) => a.out.as_deref(),
            Command::Select(a) => a.out.as_deref(),
            Command::Simulate(a) => a.out.as_deref(),
            Command::Mc(a) => a.out.as_deref(),
            Command::Sweep(a) => a.out.as_deref(),
            Command::Replay(a) => a.out.as_deref(),
        }
    }

    pub fn default_out_name(&self) -> String {
        match self {
            Command::Reliability(a) => format!("reliability.{}", a.format.extension()),
            Command::Simulate(_) => "simulate.csv".into(),
            Command::Sweep(a) => a.name.as_str().into(),
            other => format!("{}.json", other.name()),
        }
    }
}

/// Artifacts (file name relative to the output location, bytes) and an
/// error to report after writing them.
#[derive(Debug, Default)]
pub struct Produced {
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub deferred: Option<CliError>,
}

impl Produced {
    fn one(name: &str, bytes: Vec<u8>) -> Self {
        Self { artifacts: vec![(name.to_string(), bytes)], deferred: None }
    }
}

fn stem(name: &str) -> &str {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
}

pub fn dispatch(command: Command, ctx: &mut Ctx, out_name: &str) -> Result<Produced, CliError> {
    match command {
        Command::Reliability(a) => cmd_reliability(a, ctx, out_name),
        Command::Fit(a) => cmd_fit(a, ctx, out_name),
        Command::Partition(a) => cmd_partition(a, ctx, out_name),
        Command::Select(a) => cmd_select(a, ctx, out_name),
        Command::Simulate(a) => cmd_simulate(a, ctx, out_name),
        Command::Mc(a) => cmd_mc(a, ctx, out_name),
        Command::Sweep(a) => {
            ctx.seed = Some(a.seed);
            let p = sweeps::run(a.name, a.seed, a.format)?;
            Ok(Produced { artifacts: p.artifacts, deferred: p.deferred })
        }
        Command::Replay(_) => Err(CliError::usage("replay is handled by the driver")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Uniform,
    Truncnorm,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got '{s}'"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    Ok([p(a)?, p(b)?])
}

/// `start:stop:step`, inclusive of the endpoint within 1e-9.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts[..] else {
        return Err(format!("expected START:STOP:STEP, got '{s}'"));
    };
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    crate::reliability::theta_grid(p(a)?, p(b)?, p(c)?).map_err(|e| e.to_string())
}

/// A device given either as a JSON file or by family, bounds and parameters.
#[derive(Debug, Clone, Args)]
pub struct DeviceArgs {
    /// Device JSON file: {"label", "capacity", "demand"}.
    #[arg(long, conflicts_with_all = ["cbounds", "dbounds"])]
    pub device: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Family::Uniform)]
    pub ctype: Family,
    /// Capacity bounds LO,HI in GFLOPS.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub cbounds: Option<[f64; 2]>,
    #[arg(long)]
    pub cmu: Option<f64>,
    #[arg(long)]
    pub csigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = Family::Uniform)]
    pub dtype: Family,
    /// Demand bounds LO,HI in GFLOPs per frame.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub dbounds: Option<[f64; 2]>,
    #[arg(long)]
    pub dmu: Option<f64>,
    #[arg(long)]
    pub dsigma: Option<f64>,
}

fn marginal(
    side: &str,
    family: Family,
    bounds: Option<[f64; 2]>,
    mu: Option<f64>,
    sigma: Option<f64>,
) -> Result<Marginal, CliError> {
    let [lo, hi] = bounds.ok_or_else(|| CliError::usage(format!("--{side}bounds is required without --device")))?;
    let b = Bounds::physical(lo, hi).map_err(|e| CliError::usage(format!("--{side}bounds: {e}")))?;
    match family {
        Family::Uniform => Ok(Marginal::uniform(b)),
        Family::Truncnorm => {
            let (Some(mu), Some(sigma)) = (mu, sigma) else {
                return Err(CliError::usage(format!("--{side}type truncnorm needs --{side}mu and --{side}sigma")));
            };
            Marginal::truncnorm(mu, sigma, b).map_err(|e| CliError::usage(format!("{side}: {e}")))
        }
    }
}

impl DeviceArgs {
    pub fn build(&self, ctx: &mut Ctx) -> Result<DeviceModel, CliError> {
        if let Some(path) = &self.device {
            return ctx.load(path);
        }
        let c = marginal("c", self.ctype, self.cbounds, self.cmu, self.csigma)?;
        let d = marginal("d", self.dtype, self.dbounds, self.dmu, self.dsigma)?;
        DeviceModel::new("device", c, d).map_err(|e| CliError::usage(e.to_string()))
    }

    fn given(&self) -> bool {
        self.device.is_some() || self.cbounds.is_some() || self.dbounds.is_some()
    }
}

fn qos(theta: f64) -> Result<QosThreshold, CliError> {
    QosThreshold::new(theta).map_err(|e| CliError::usage(format!("--theta: {e}")))
}

#[derive(Debug, Args)]
pub struct ReliabilityArgs {
    #[command(flatten)]
    pub device: DeviceArgs,
    /// Threshold grid START:STOP:STEP.
    #[arg(long, value_parser = parse_grid, required_unless_present = "theta", conflicts_with = "theta")]
    pub thetas: Option<std::vec::Vec<f64>>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn cmd_reliability(a: ReliabilityArgs, ctx: &mut Ctx, out: &str) -> Result<Produced, CliError> {
    let device = a.device.build(ctx)?;
    let grid = match (a.thetas, a.theta) {
        (Some(g), _) => g,
        (None, Some(t)) => vec![qos(t)?.value()],
        (None, None) => return Err(CliError::usage("--thetas or --theta is required")),
    };
    let mut bundle = CurveBundle::new(["theta", "reliability"]);
    for (t, r) in reliability_curve(&device, &grid)? {
        bundle.push(vec![t, r]);
    }
    let bytes = match a.format {
        Format::Csv => bundle.to_csv()?,
        Format::Json => bundle.to_json(),
    };
    Ok(Produced::one(out, bytes))
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trace JSON file: {"samples", "bounds", "timestamps"?}.
    #[arg(long)]
    pub trace: PathBuf,
    /// Keep one sample per this many frames before fitting.
    #[arg(long)]
    pub decimate: Option<u64>,
    #[arg(long, requires = "sigma0")]
    pub mu0: Option<f64>,
    #[arg(long, requires = "mu0")]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn cmd_fit(a: FitArgs, ctx: &mut Ctx, out: &str) -> Result<Produced, CliError> {
    let mut trace: ObservationTrace = ctx.load(&a.trace)?;
    if let Some(k) = a.decimate {
        trace = trace.decimate(k).map_err(|e| CliError::usage(format!("--decimate: {e}")))?;
    }
    let fit: FitResult = match (a.mu0, a.sigma0) {
        (Some(m), Some(s)) => fit_truncnorm_mle_from(&trace, m, s)?,
        _ => fit_truncnorm_mle(&trace)?,
    };
    let mut p = Produced::one(out, json_bytes(&fit));
    if !fit.converged {
        p.deferred = Some(CliError::non_convergence(format!(
            "projected gradient norm {:e} after {} iterations; the likelihood may have no interior maximum",
            fit.gradient_norm, fit.iterations
        )));
    }
    Ok(p)
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Pool JSON file: {"devices": [...]}.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PartitionOutput<'a> {
    theta: f64,
    labels: Vec<&'a str>,
    #[serde(flatten)]
    solution: PartitionSolution,
}

fn cmd_partition(a: PartitionArgs, ctx: &mut Ctx, out: &str) -> Result<Produced, CliError> {
    let pool: DevicePool = ctx.load(&a.pool)?;
    let theta = qos(a.theta)?;
    let solution = optimize_partition(&pool, theta)?;
    let o = PartitionOutput { theta: theta.value(), labels: pool.labels(), solution };
    Ok(Produced::one(out, json_bytes(&o)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Series,
    Parallel,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub epsilon: f64,
    /// Candidate pool JSON file; reliabilities are computed at --theta.
    #[arg(long, requires = "theta", conflicts_with_all = ["reliabilities", "uniform_r"])]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Candidate reliabilities, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "uniform_r")]
    pub reliabilities: Option<Vec<f64>>,
    /// Every candidate has this reliability.
    #[arg(long, requires = "pool_size")]
    pub uniform_r: Option<f64>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SelectOutput {
    #[serde(flatten)]
    result: SelectionResult,
    candidates: usize,
    /// Replicas that suffice when every candidate is as weak as the weakest.
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_case_bound: Option<usize>,
}

fn cmd_select(a: SelectArgs, ctx: &mut Ctx, out: &str) -> Result<Produced, CliError> {
    let numbered = |rs: Vec<f64>| -> Vec<(String, f64)> {
        rs.into_iter().enumerate().map(|(i, r)| (format!("d{i:02}"), r)).collect()
    };
    let candidates = if let Some(path) = &a.pool {
        let pool: DevicePool = ctx.load(path)?;
        let theta = qos(a.theta.expect("clap enforces --theta with --pool"))?;
        let rs = pool.reliabilities(theta)?;
        pool.labels().into_iter().map(String::from).zip(rs).collect()
    } else if let Some(rs) = a.reliabilities {
        numbered(rs)
    } else if let (Some(r), Some(m)) = (a.uniform_r, a.pool_size) {
        numbered(vec![r; m])
    } else {
        return Err(CliError::usage("give --pool with --theta, --reliabilities, or --uniform-r with --pool-size"));
    };
    if candidates.is_empty() {
        return Err(CliError::usage("the candidate set is empty"));
    }
    let usage = |e: crate::system::SystemError| CliError::usage(e.to_string());
    let result = match a.mode {
        Mode::Series => select_series(&candidates, a.epsilon).map_err(usage)?,
        Mode::Parallel => select_parallel(&candidates, a.epsilon).map_err(usage)?,
    };
    let r_min = candidates.iter().map(|c| c.1).fold(1.0, f64::min);
    let worst_case_bound = match a.mode {
        Mode::Parallel => parallel_worst_case_bound(r_min, a.epsilon).ok(),
        Mode::Series => None,
    };
    let o = SelectOutput { result, candidates: candidates.len(), worst_case_bound };
    Ok(Produced::one(out, json_bytes(&o)))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file (schema 1).
    pub scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the scenario's QoS threshold.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateSummary {
    scenario: String,
    #[serde(flatten)]
    summary: SimSummary,
    capacity_bounds: (f64, f64),
    demand_bounds: (f64, f64),
}

fn scenario_error(file: &str, e: SimError) -> CliError {
    match e {
        SimError::MissingSeed => CliError::usage(format!("{e}; pass --seed")),
        SimError::UnsupportedSchema(_) => CliError::schema(file, "schema", e.to_string()),
        SimError::InvalidRange { name, .. } => CliError::schema(file, &format!("trace.{name}"), e.to_string()),
        SimError::InvalidInterval => CliError::schema(file, "trace.change_interval", e.to_string()),
        SimError::NoFrames => CliError::schema(file, "trace.n_frames", e.to_string()),
        SimError::InvalidCostModel { .. } | SimError::InvalidScale(_) => {
            CliError::schema(file, "cost_model", e.to_string())
        }
        SimError::InvalidProfile(_) | SimError::OutsideProfile { .. } | SimError::CapacityOutsideProfile { .. } => {
            CliError::schema(file, "capacity_profile", e.to_string())
        }
        SimError::InvalidDeployment(_) => CliError::schema(file, "deployment", e.to_string()),
        other => CliError::schema(file, "trace", other.to_string()),
    }
}

fn cmd_simulate(a: SimulateArgs, ctx: &mut Ctx, out: &str) -> Result<Produced, CliError> {
    let file = a.scenario.display().to_string();
    let mut s: Scenario = ctx.load(&a.scenario)?;
    if let Some(t) = a.theta {
        s.theta = qos(t)?.value();
    }
    s.validate().map_err(|e| scenario_error(&file, e))?;
    let cfg = s.trace_config(a.seed).map_err(|e| scenario_error(&file, e))?;
    ctx.seed = Some(cfg.seed);
    let (cm, profile) = (&s.cost_model, &s.capacity_profile);
    let sim = run_stream_sim(&cfg, cm, profile, s.qos()?)?;
    let stem = stem(out);

    let mut csv = Vec::new();
    sim.write_csv(&mut csv)?;
    let mut p = Produced::one(out, csv);
    let summary = SimulateSummary {
        scenario: s.name.clone(),
        summary: sim.summary(),
        capacity_bounds: cfg.capacity_range(profile)?,
        demand_bounds: cfg.demand_range(cm)?,
    };
    p.artifacts.push((format!("{stem}.summary.json"), json_bytes(&summary)));
    if let Some(grid) = &s.thetas {
        let mut b = CurveBundle::new(["theta", "empirical"]);
        for (t, e) in empirical_reliability_curve(&sim, &grid.values()?)? {
            b.push(vec![t, e]);
        }
        p.artifacts.push((format!("{stem}.curve.csv"), b.to_csv()?));
    }
    if let Some(dep) = &s.deployment {
        let rep = run_series_deployment(dep, &cfg, cm, profile)?;
        let mut frames = Vec::new();
        rep.write_frames_csv(&mut frames)?;
        p.artifacts.push((format!("{stem}.deployment.json"), json_bytes(&rep.summary())));
        p.artifacts.push((format!("{stem}.deployment.csv"), frames));
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigKind {
    Series,
    Parallel,
    Partitioned,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub device: DeviceArgs,
    /// Pool JSON file; simulates a configuration instead of one device.
    #[arg(long, conflicts_with_all = ["device", "cbounds", "dbounds"])]
    pub pool: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ConfigKind::Series)]
    pub config: ConfigKind,
    /// Workload fractions for `--config partitioned`; equal split if absent.
    #[arg(long, value_delimiter = ',')]
    pub alloc: Option<Vec<f64>>,
    #[arg(long)]
    pub theta: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: u64,
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct McOutput {
    theta: f64,
    configuration: String,
    #[serde(flatten)]
    estimate: McEstimate,
    analytical: f64,
    /// |estimate − analytical| in binomial standard deviations.
    z_score: f64,
    band_contains_analytical: bool,
}

fn cmd_mc(a: McArgs, ctx: &mut Ctx, out: &str) -> Result<Produced, CliError> {
    let seed = a.seed.expect("clap enforces --seed");
    ctx.seed = Some(seed);
    let theta = qos(a.theta)?;
    let too_few = |e: crate::mcoracle::McError| CliError::usage(e.to_string());
    let (estimate, analytical, configuration) = if let Some(path) = &a.pool {
        let pool: DevicePool = ctx.load(path)?;
        let (config, analytical) = match a.config {
            ConfigKind::Series => (Configuration::Series, series_reliability(&pool, &vec![theta; pool.len()])?),
            ConfigKind::Parallel => (Configuration::Parallel, parallel_reliability(&pool, theta)?),
            ConfigKind::Partitioned => {
                let alloc = match &a.alloc {
                    Some(f) => Allocation::new(f.clone()).map_err(|e| CliError::usage(format!("--alloc: {e}")))?,
                    None => Allocation::equal(pool.len())?,
                };
                let r = partitioned_reliability(&pool, &alloc, theta).map_err(|e| CliError::usage(e.to_string()))?;
                (Configuration::Partitioned { allocation: alloc }, r)
            }
        };
        let name = format!("{:?}", a.config).to_lowercase();
        (mc_system_reliability(&pool, &config, theta, a.n, seed).map_err(too_few)?, analytical, name)
    } else if a.device.given() {
        let device = a.device.build(ctx)?;
        let r = reliability(&device, theta)?;
        (mc_single_reliability(&device, theta, a.n, seed).map_err(too_few)?, r, "single".to_string())
    } else {
        return Err(CliError::usage("give a device (--device or --cbounds/--dbounds) or --pool"));
    };
    let o = McOutput {
        theta: theta.value(),
        configuration,
        z_score: estimate.z_score(analytical),
        band_contains_analytical: estimate.band_contains(analytical),
        estimate,
        analytical,
    };
    Ok(Produced::one(out, json_bytes(&o)))
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub name: SweepName,
    #[arg(long, required = true)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output directory; defaults to `<output dir>/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Directory to write into instead of the original location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
