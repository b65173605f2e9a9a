//! Named end-to-end experiments. Each returns data tables; [`run`] turns them
//! into artifacts.
//!
//! | name | content |
//! |------|---------|
//! | fig2a | MI analytical, Monte Carlo and empirical curves for the uniform scenario |
//! | fig2b | the same for three thread ranges, with mean FPS |
//! | fig2c | one run split into low / mid / high demand regimes |
//! | fig4a | fitted historical model vs Monte Carlo, empirical, MI and the true model |
//! | fig4b | fitted curves after 10, 50 and 130 samples |
//! | fig6 | online estimate at Θ = 2.5 and fitted parameters vs sample count |
//! | fig7 | four-worker series deployment |
//! | fig8 | N* for series and parallel selection vs ε |

use rayon::prelude::*;
use serde_json::{json, Value};

use super::emit::{json_bytes, CurveBundle, Format};
use super::CliError;
use crate::estimation::{fit_device, moments_init, FittedDevice, ObservationTrace, OnlineFit};
use crate::mcoracle::mc_single_reliability;
use crate::probkernel::{BoundedDistribution, Bounds, Marginal};
use crate::reliability::{reliability, reliability_mi, theta_grid, DeviceModel, QosThreshold};
use crate::simharness::{
    builtin_scenario, empirical_fraction_curve, empirical_reliability_curve, run_series_deployment, run_stream_sim,
    Scenario, SimResult, TraceConfig,
};
use crate::system::{parallel_worst_case_bound, select_parallel, select_series};

/// Monte Carlo draws per threshold.
pub const MC_SAMPLES: u64 = 100_000;
/// Demand split points of the regime sweep, GFLOPs per frame.
pub const DEMAND_SPLIT: (f64, f64) = (104.0, 178.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepName {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig4a,
    Fig4b,
    Fig6,
    Fig7,
    Fig8,
}

impl SweepName {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepName::Fig2a => "fig2a",
            SweepName::Fig2b => "fig2b",
            SweepName::Fig2c => "fig2c",
            SweepName::Fig4a => "fig4a",
            SweepName::Fig4b => "fig4b",
            SweepName::Fig6 => "fig6",
            SweepName::Fig7 => "fig7",
            SweepName::Fig8 => "fig8",
        }
    }
}

pub fn scenario(name: &str) -> Scenario {
    serde_json::from_str(builtin_scenario(name).expect("known scenario")).expect("shipped scenarios parse")
}

fn q(t: f64) -> Result<QosThreshold, CliError> {
    Ok(QosThreshold::new(t)?)
}

/// Trace, simulation and induced (true) device of a shipped scenario.
pub struct Run {
    pub scenario: Scenario,
    pub cfg: TraceConfig,
    pub sim: SimResult,
    pub truth: DeviceModel,
    pub grid: Vec<f64>,
}

pub fn simulate_scenario(name: &str, seed: u64, thread_range: Option<[u32; 2]>) -> Result<Run, CliError> {
    let s = scenario(name);
    let mut cfg = s.trace_config(Some(seed))?;
    if let Some(r) = thread_range {
        cfg.thread_range = r;
    }
    let sim = run_stream_sim(&cfg, &s.cost_model, &s.capacity_profile, s.qos()?)?;
    let truth = cfg.induced_device(name, &s.cost_model, &s.capacity_profile)?;
    let grid = s.thetas.map(|g| g.values()).transpose()?.unwrap_or_else(|| vec![s.theta]);
    Ok(Run { scenario: s, cfg, sim, truth, grid })
}

fn bounds_of(d: &DeviceModel) -> (Bounds, Bounds) {
    (d.capacity().bounds(), d.demand().bounds())
}

/// Fits the first `n` interval samples of a run.
pub fn fit_prefix(run: &Run, n: usize) -> Result<FittedDevice, CliError> {
    let (cb, db) = bounds_of(&run.truth);
    let samples = run.sim.interval_samples();
    let n = n.min(samples.len());
    let ct = ObservationTrace::new(samples[..n].iter().map(|s| s.0).collect(), cb)?;
    let dt = ObservationTrace::new(samples[..n].iter().map(|s| s.1).collect(), db)?;
    Ok(fit_device(format!("fit{n}"), &ct, &dt)?)
}

pub struct CurveSweep {
    pub curves: CurveBundle,
    pub summary: Value,
    pub frames: Option<Vec<u8>>,
    pub converged: bool,
}

/// `theta,analytical,mc,mc_lo,mc_hi,empirical` plus any `extra` columns.
fn validation_rows(
    model: &DeviceModel,
    sim: &SimResult,
    grid: &[f64],
    seed: u64,
    extra: &[(&str, &DeviceModel)],
) -> Result<CurveBundle, CliError> {
    let emp = empirical_reliability_curve(sim, grid)?;
    let mut cols = vec!["theta", "analytical", "mc", "mc_lo", "mc_hi", "empirical"];
    cols.extend(extra.iter().map(|e| e.0));
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let th = q(t)?;
            let m = mc_single_reliability(model, th, MC_SAMPLES, seed)?;
            let mut row = vec![t, reliability(model, th)?, m.estimate, m.ci_lo, m.ci_hi, emp[i].1];
            for (_, d) in extra {
                row.push(reliability(d, th)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut b = CurveBundle::new(cols);
    rows.into_iter().for_each(|r| b.push(r));
    Ok(b)
}

fn frames_csv(sim: &SimResult) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    sim.write_csv(&mut out)?;
    Ok(out)
}

pub fn fig2a(seed: u64) -> Result<CurveSweep, CliError> {
    let run = simulate_scenario("fig2a", seed, None)?;
    let curves = validation_rows(&run.truth, &run.sim, &run.grid, seed, &[])?;
    let (cb, db) = bounds_of(&run.truth);
    let summary = json!({
        "scenario": "fig2a",
        "seed": seed,
        "n_frames": run.sim.n_frames(),
        "n_intervals": run.sim.n_intervals(),
        "mc_samples": MC_SAMPLES,
        "capacity_bounds": cb,
        "demand_bounds": db,
        "mean_fps": run.sim.mean_fps,
    });
    Ok(CurveSweep { curves, summary, frames: Some(frames_csv(&run.sim)?), converged: true })
}

pub const FIG2B_THREADS: [[u32; 2]; 3] = [[2, 6], [4, 8], [6, 12]];

pub fn fig2b(seed: u64) -> Result<CurveSweep, CliError> {
    let runs = FIG2B_THREADS
        .par_iter()
        .map(|&r| simulate_scenario("fig2a", seed, Some(r)))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = runs[0].grid.clone();
    let mut cols = vec!["theta".to_string()];
    let mut configs = Vec::new();
    let mut per_run = Vec::new();
    for (run, r) in runs.iter().zip(FIG2B_THREADS) {
        let tag = format!("t{}_{}", r[0], r[1]);
        cols.push(format!("{tag}_analytical"));
        cols.push(format!("{tag}_empirical"));
        let (cb, db) = bounds_of(&run.truth);
        let analytical: Vec<f64> = grid.iter().map(|&t| Ok(reliability_mi(cb, db, q(t)?))).collect::<Result<_, CliError>>()?;
        per_run.push((analytical, empirical_reliability_curve(&run.sim, &grid)?));
        configs.push(json!({
            "thread_range": r,
            "capacity_bounds": cb,
            "mean_fps": run.sim.mean_fps,
        }));
    }
    let mut curves = CurveBundle::new(cols);
    for (i, &t) in grid.iter().enumerate() {
        let mut row = vec![t];
        for (a, e) in &per_run {
            row.push(a[i]);
            row.push(e[i].1);
        }
        curves.push(row);
    }
    let summary = json!({ "scenario": "fig2a", "seed": seed, "configs": configs });
    Ok(CurveSweep { curves, summary, frames: None, converged: true })
}

pub fn fig2c(seed: u64) -> Result<CurveSweep, CliError> {
    let run = simulate_scenario("fig2a", seed, None)?;
    let (cb, db) = bounds_of(&run.truth);
    let (lo, hi) = DEMAND_SPLIT;
    let regimes = [
        ("low", db.lo(), lo),
        ("mid", lo, hi),
        ("high", hi, db.hi()),
    ];
    let mut cols = vec!["theta".to_string()];
    let mut parts = Vec::new();
    let mut counts = Vec::new();
    for (name, a, b) in regimes {
        cols.push(format!("{name}_analytical"));
        cols.push(format!("{name}_empirical"));
        let frames: Vec<_> = run
            .sim
            .records
            .iter()
            .copied()
            .filter(|f| match name {
                "low" => f.demand_gflops < a.max(b),
                "high" => f.demand_gflops > a,
                _ => f.demand_gflops >= a && f.demand_gflops <= b,
            })
            .collect();
        counts.push(json!({ "regime": name, "demand_bounds": [a, b], "frames": frames.len() }));
        let emp = if frames.is_empty() {
            run.grid.iter().map(|&t| (t, f64::NAN)).collect()
        } else {
            empirical_fraction_curve(&frames, &run.grid)?
        };
        // uniform demand conditioned on a sub-range is uniform on it
        let sub = Bounds::physical(a, b)?;
        let ana: Vec<f64> = run.grid.iter().map(|&t| Ok(reliability_mi(cb, sub, q(t)?))).collect::<Result<_, CliError>>()?;
        parts.push((ana, emp));
    }
    let mut curves = CurveBundle::new(cols);
    for (i, &t) in run.grid.iter().enumerate() {
        let mut row = vec![t];
        for (a, e) in &parts {
            row.push(a[i]);
            row.push(e[i].1);
        }
        curves.push(row);
    }
    let summary = json!({ "scenario": "fig2a", "seed": seed, "regimes": counts });
    Ok(CurveSweep { curves, summary, frames: None, converged: true })
}

fn fit_json(f: &FittedDevice) -> Value {
    json!({ "capacity": f.capacity, "demand": f.demand })
}

pub fn fig4a(seed: u64) -> Result<CurveSweep, CliError> {
    let run = simulate_scenario("fig4a", seed, None)?;
    let fit = fit_prefix(&run, usize::MAX)?;
    let (cb, db) = bounds_of(&run.truth);
    let mi = DeviceModel::minimal_information("mi", cb, db)?;
    let curves = validation_rows(&fit.device, &run.sim, &run.grid, seed, &[("mi", &mi), ("truth", &run.truth)])?;
    let th = run.scenario.qos()?;
    let summary = json!({
        "scenario": "fig4a",
        "seed": seed,
        "n_intervals": run.sim.n_intervals(),
        "fit": fit_json(&fit),
        "at_theta": {
            "theta": th.value(),
            "historical": reliability(&fit.device, th)?,
            "mi": reliability(&mi, th)?,
            "truth": reliability(&run.truth, th)?,
            "empirical": run.sim.empirical_reliability,
        },
    });
    Ok(CurveSweep { curves, summary, frames: Some(frames_csv(&run.sim)?), converged: fit.converged() })
}

pub const FIG4B_SIZES: [usize; 3] = [10, 50, 130];

pub fn fig4b(seed: u64) -> Result<CurveSweep, CliError> {
    let run = simulate_scenario("fig4a", seed, None)?;
    let fits = FIG4B_SIZES.iter().map(|&n| fit_prefix(&run, n)).collect::<Result<Vec<_>, _>>()?;
    let (cb, db) = bounds_of(&run.truth);
    let mut cols: Vec<String> = vec!["theta".into()];
    cols.extend(FIG4B_SIZES.iter().map(|n| format!("n{n}")));
    cols.extend(["truth".to_string(), "mi".to_string()]);
    let mut curves = CurveBundle::new(cols);
    for &t in &run.grid {
        let th = q(t)?;
        let mut row = vec![t];
        for f in &fits {
            row.push(reliability(&f.device, th)?);
        }
        row.push(reliability(&run.truth, th)?);
        row.push(reliability_mi(cb, db, th));
        curves.push(row);
    }
    let summary = json!({
        "scenario": "fig4a",
        "seed": seed,
        "fits": FIG4B_SIZES.iter().zip(&fits).map(|(n, f)| json!({ "n": n, "fit": fit_json(f) })).collect::<Vec<_>>(),
    });
    let converged = fits.iter().all(FittedDevice::converged);
    Ok(CurveSweep { curves, summary, frames: None, converged })
}

pub fn fig6(seed: u64) -> Result<CurveSweep, CliError> {
    let run = simulate_scenario("fig6", seed, None)?;
    let th = run.scenario.qos()?;
    let (cb, db) = bounds_of(&run.truth);
    let truth = reliability(&run.truth, th)?;
    let mi = reliability_mi(cb, db, th);
    let mut oc = OnlineFit::new(cb)?;
    let mut od = OnlineFit::new(db)?;
    let mut curves =
        CurveBundle::new(["n", "reliability", "mu_c", "sigma_c", "mu_d", "sigma_d", "truth", "mi"]);
    let (mc0, sc0) = moments_init(&ObservationTrace::empty(cb)?);
    let (md0, sd0) = moments_init(&ObservationTrace::empty(db)?);
    curves.push(vec![0.0, mi, mc0, sc0, md0, sd0, truth, mi]);
    for (k, (c, d)) in run.sim.interval_samples().into_iter().enumerate() {
        oc.update(c)?;
        od.update(d)?;
        let dev = DeviceModel::new("online", Marginal::TruncNorm(oc.model()), Marginal::TruncNorm(od.model()))?;
        let (mu_c, s_c) = oc.params();
        let (mu_d, s_d) = od.params();
        curves.push(vec![(k + 1) as f64, reliability(&dev, th)?, mu_c, s_c, mu_d, s_d, truth, mi]);
    }
    let law = |m: &Marginal| match m {
        Marginal::TruncNorm(t) => json!({ "mu": t.mu(), "sigma": t.sigma() }),
        Marginal::Uniform(_) => Value::Null,
    };
    let converged = [oc.last_fit(), od.last_fit()].iter().all(|f| f.is_none_or(|f| f.converged));
    let summary = json!({
        "scenario": "fig6",
        "seed": seed,
        "theta": th.value(),
        "truth": truth,
        "mi": mi,
        "final": curves.rows.last().map(|r| r[1]),
        "true_capacity_law": law(run.truth.capacity()),
        "true_demand_law": law(run.truth.demand()),
    });
    Ok(CurveSweep { curves, summary, frames: None, converged })
}

pub struct DeploymentSweep {
    pub workers: CurveBundle,
    pub frames: Vec<u8>,
    pub summary: Value,
}

pub fn fig7(seed: u64) -> Result<DeploymentSweep, CliError> {
    let s = scenario("fig7");
    let cfg = s.trace_config(Some(seed))?;
    let dep = s.deployment.as_ref().expect("fig7 has a deployment");
    let rep = run_series_deployment(dep, &cfg, &s.cost_model, &s.capacity_profile)?;
    let mut workers =
        CurveBundle::new(["worker", "thread_lo", "thread_hi", "fraction", "mean_latency_s", "mean_fps"]);
    for w in &rep.workers {
        workers.push(vec![
            w.index as f64,
            w.thread_range[0] as f64,
            w.thread_range[1] as f64,
            w.fraction,
            w.mean_latency_s,
            w.mean_fps,
        ]);
    }
    let mut frames = Vec::new();
    rep.write_frames_csv(&mut frames)?;
    let summary = serde_json::to_value(rep.summary()).expect("report serializes");
    Ok(DeploymentSweep { workers, frames, summary: json!({ "scenario": "fig7", "seed": seed, "report": summary }) })
}

pub const FIG8_SERIES_R: [f64; 3] = [0.90, 0.95, 0.99];
pub const FIG8_PARALLEL_R: [f64; 3] = [0.50, 0.70, 0.90];
pub const FIG8_POOL_SIZE: usize = 20;

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn labelled(rs: &[f64]) -> Vec<(String, f64)> {
    rs.iter().enumerate().map(|(i, &r)| (format!("d{i:02}"), r)).collect()
}

/// (series table, parallel table) over ε ∈ [0.5, 0.99].
pub fn fig8() -> Result<(CurveBundle, CurveBundle), CliError> {
    let eps = theta_grid(0.5, 0.99, 0.01)?;
    let hetero_series = labelled(&linspace(0.75, 0.95, FIG8_POOL_SIZE));
    let hetero_parallel = labelled(&linspace(0.40, 0.80, FIG8_POOL_SIZE));
    let r_min = 0.40;

    let name = |r: f64| format!("uniform_{r:.2}");
    let mut cols = vec!["epsilon".to_string()];
    cols.extend(FIG8_SERIES_R.iter().map(|&r| name(r)));
    cols.push("heterogeneous".into());
    let mut series = CurveBundle::new(cols);
    let mut cols = vec!["epsilon".to_string()];
    cols.extend(FIG8_PARALLEL_R.iter().map(|&r| name(r)));
    cols.extend(["heterogeneous".to_string(), "worst_case_bound".to_string()]);
    let mut parallel = CurveBundle::new(cols);

    let n_star = |r: Result<crate::system::SelectionResult, _>| -> Result<f64, CliError> {
        let r: crate::system::SelectionResult = r?;
        Ok(if r.feasible { r.n_star as f64 } else { f64::NAN })
    };
    for &e in &eps {
        let mut row = vec![e];
        for &r in &FIG8_SERIES_R {
            row.push(select_series(&labelled(&[r; FIG8_POOL_SIZE]), e)?.n_star as f64);
        }
        row.push(select_series(&hetero_series, e)?.n_star as f64);
        series.push(row);

        let mut row = vec![e];
        for &r in &FIG8_PARALLEL_R {
            row.push(n_star(select_parallel(&labelled(&[r; FIG8_POOL_SIZE]), e))?);
        }
        row.push(n_star(select_parallel(&hetero_parallel, e))?);
        row.push(parallel_worst_case_bound(r_min, e)? as f64);
        parallel.push(row);
    }
    Ok((series, parallel))
}

pub struct SweepProduct {
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub deferred: Option<CliError>,
}

fn table(b: &CurveBundle, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => b.to_csv(),
        Format::Json => Ok(b.to_json()),
    }
}

pub fn run(name: SweepName, seed: u64, format: Format) -> Result<SweepProduct, CliError> {
    let n = name.as_str();
    let ext = format.extension();
    let mut artifacts = Vec::new();
    let mut deferred = None;
    let curve_sweep = match name {
        SweepName::Fig2a => Some(fig2a(seed)?),
        SweepName::Fig2b => Some(fig2b(seed)?),
        SweepName::Fig2c => Some(fig2c(seed)?),
        SweepName::Fig4a => Some(fig4a(seed)?),
        SweepName::Fig4b => Some(fig4b(seed)?),
        SweepName::Fig6 => Some(fig6(seed)?),
        SweepName::Fig7 | SweepName::Fig8 => None,
    };
    if let Some(c) = curve_sweep {
        artifacts.push((format!("{n}.{ext}"), table(&c.curves, format)?));
        if let Some(f) = c.frames {
            artifacts.push((format!("{n}_frames.csv"), f));
        }
        artifacts.push((format!("{n}_summary.json"), json_bytes(&c.summary)));
        if !c.converged {
            deferred = Some(CliError::non_convergence(format!(
                "{n}: at least one maximum-likelihood fit did not converge; see {n}_summary.json"
            )));
        }
    }
    match name {
        SweepName::Fig7 => {
            let d = fig7(seed)?;
            artifacts.push((format!("fig7_workers.{ext}"), table(&d.workers, format)?));
            artifacts.push(("fig7_frames.csv".into(), d.frames));
            artifacts.push(("fig7_summary.json".into(), json_bytes(&d.summary)));
        }
        SweepName::Fig8 => {
            let (s, p) = fig8()?;
            artifacts.push((format!("fig8a.{ext}"), table(&s, format)?));
            artifacts.push((format!("fig8b.{ext}"), table(&p, format)?));
        }
        _ => {}
    }
    Ok(SweepProduct { artifacts, deferred })
}
