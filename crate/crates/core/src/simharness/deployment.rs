//! Series spatial-partitioning deployment: each frame is split across workers
//! and completes when the slowest region does.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{capacity_draws, demand_draws, CapacityProfile, CostModel, SimError, TraceConfig, DEMAND_STREAM};
use crate::numfmt::sig9;
use crate::probkernel::SimRng;
use crate::system::Allocation;

/// Typical per-frame communication overhead, (low, high) in seconds.
pub const TAU_COMM_PRESET_S: (f64, f64) = (0.005, 0.020);

/// Capacity stream of worker 0; worker `i` uses this plus `i`.
const WORKER_STREAM_BASE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    #[default]
    Equal,
    Fractions(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    pub n_workers: usize,
    pub thread_ranges: Vec<[u32; 2]>,
    #[serde(default)]
    pub tau_comm: f64,
    #[serde(default)]
    pub partition: Partition,
    /// Thread range of the single-worker baseline; worker 0's by default.
    #[serde(default)]
    pub baseline_threads: Option<[u32; 2]>,
}

impl DeploymentConfig {
    /// Equal partition, no communication overhead.
    pub fn new(thread_ranges: Vec<[u32; 2]>) -> Self {
        Self {
            n_workers: thread_ranges.len(),
            thread_ranges,
            tau_comm: 0.0,
            partition: Partition::Equal,
            baseline_threads: None,
        }
    }

    pub fn allocation(&self) -> Result<Allocation, SimError> {
        let a = match &self.partition {
            Partition::Equal => Allocation::equal(self.n_workers),
            Partition::Fractions(f) => Allocation::new(f.clone()),
        };
        let a = a.map_err(|e| SimError::InvalidDeployment(e.to_string()))?;
        if a.len() != self.n_workers {
            return Err(SimError::InvalidDeployment(format!(
                "partition has {} fractions for {} workers",
                a.len(),
                self.n_workers
            )));
        }
        Ok(a)
    }

    fn validate(&self, cfg: &TraceConfig, cm: &CostModel, profile: &CapacityProfile) -> Result<Allocation, SimError> {
        if self.n_workers == 0 {
            return Err(SimError::InvalidDeployment("n_workers must be >= 1".into()));
        }
        if self.thread_ranges.len() != self.n_workers {
            return Err(SimError::InvalidDeployment(format!(
                "{} thread ranges for {} workers",
                self.thread_ranges.len(),
                self.n_workers
            )));
        }
        if !(self.tau_comm.is_finite() && self.tau_comm >= 0.0) {
            return Err(SimError::InvalidDeployment(format!("tau_comm must be >= 0, got {}", self.tau_comm)));
        }
        for &r in self.thread_ranges.iter().chain(self.baseline_threads.iter()) {
            TraceConfig { thread_range: r, ..cfg.clone() }.validate(cm, profile)?;
        }
        self.allocation()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerReport {
    pub index: usize,
    pub thread_range: [u32; 2],
    pub fraction: f64,
    pub mean_latency_s: f64,
    pub mean_fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentFrame {
    pub frame: u64,
    pub demand_gflops: f64,
    pub worker_latency_s: Vec<f64>,
    pub system_latency_s: f64,
    pub baseline_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentReport {
    pub workers: Vec<WorkerReport>,
    pub system_mean_latency_s: f64,
    /// Mean over frames of 1 / system latency.
    pub system_fps: f64,
    pub baseline_mean_latency_s: f64,
    pub baseline_fps: f64,
    pub speedup: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub frames: Vec<DeploymentFrame>,
}

impl DeploymentReport {
    /// Copy without the per-frame rows.
    pub fn summary(&self) -> Self {
        Self { frames: Vec::new(), ..self.clone() }
    }

    /// `frame,demand_gflops,worker0_latency_s,…,system_latency_s,baseline_latency_s`
    pub fn write_frames_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let io = |e: csv::Error| SimError::Io(e.to_string());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["frame".to_string(), "demand_gflops".to_string()];
        header.extend((0..self.workers.len()).map(|i| format!("worker{i}_latency_s")));
        header.extend(["system_latency_s".to_string(), "baseline_latency_s".to_string()]);
        out.write_record(&header).map_err(io)?;
        for f in &self.frames {
            let mut row = vec![f.frame.to_string(), sig9(f.demand_gflops)];
            row.extend(f.worker_latency_s.iter().map(|&x| sig9(x)));
            row.extend([sig9(f.system_latency_s), sig9(f.baseline_latency_s)]);
            out.write_record(&row).map_err(io)?;
        }
        out.flush().map_err(|e| SimError::Io(e.to_string()))
    }
}

/// Per frame: τ_i = τ_comm + α_i·Γ / C_i, system latency max_i τ_i, and a
/// single-worker baseline Γ / C_b without communication.
///
/// The frame demand comes from the trace's scale law. Worker capacities are
/// drawn from each worker's own thread range with the trace's capacity law;
/// the baseline reuses worker 0's random stream.
pub fn run_series_deployment(
    dep: &DeploymentConfig,
    cfg: &TraceConfig,
    cm: &CostModel,
    profile: &CapacityProfile,
) -> Result<DeploymentReport, SimError> {
    cfg.validate(cm, profile)?;
    let alloc = dep.validate(cfg, cm, profile)?;
    let n_int = cfg.n_intervals();
    let demand =
        demand_draws(cfg.scale_range, cfg.demand_law, cm, n_int, &mut SimRng::with_stream(cfg.seed, DEMAND_STREAM))?;
    let caps = dep
        .thread_ranges
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut rng = SimRng::with_stream(cfg.seed, WORKER_STREAM_BASE + i as u64);
            capacity_draws(r, cfg.capacity_law, profile, n_int, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let base_range = dep.baseline_threads.unwrap_or(dep.thread_ranges[0]);
    let base = capacity_draws(
        base_range,
        cfg.capacity_law,
        profile,
        n_int,
        &mut SimRng::with_stream(cfg.seed, WORKER_STREAM_BASE),
    )?;

    let frames: Vec<DeploymentFrame> = (0..cfg.n_frames)
        .map(|frame| {
            let k = (frame / cfg.change_interval) as usize;
            let g = demand[k].gflops;
            let worker_latency_s: Vec<f64> = alloc
                .fractions()
                .iter()
                .zip(&caps)
                .map(|(a, c)| dep.tau_comm + a * g / c[k].gflops)
                .collect();
            let system_latency_s = worker_latency_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            DeploymentFrame {
                frame,
                demand_gflops: g,
                worker_latency_s,
                system_latency_s,
                baseline_latency_s: g / base[k].gflops,
            }
        })
        .collect();

    let n = frames.len() as f64;
    let mean = |f: &dyn Fn(&DeploymentFrame) -> f64| frames.iter().map(f).sum::<f64>() / n;
    let workers = (0..dep.n_workers)
        .map(|i| WorkerReport {
            index: i,
            thread_range: dep.thread_ranges[i],
            fraction: alloc.fractions()[i],
            mean_latency_s: mean(&|f| f.worker_latency_s[i]),
            mean_fps: mean(&|f| 1.0 / f.worker_latency_s[i]),
        })
        .collect();
    let system_fps = mean(&|f| 1.0 / f.system_latency_s);
    let baseline_fps = mean(&|f| 1.0 / f.baseline_latency_s);
    Ok(DeploymentReport {
        workers,
        system_mean_latency_s: mean(&|f| f.system_latency_s),
        system_fps,
        baseline_mean_latency_s: mean(&|f| f.baseline_latency_s),
        baseline_fps,
        speedup: system_fps / baseline_fps,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(thread_range: [u32; 2]) -> (TraceConfig, CostModel, CapacityProfile) {
        (
            TraceConfig::new(thread_range, [0.4, 0.9], 20, 600, 11),
            CostModel::new(343.75).unwrap(),
            CapacityProfile::synthetic(),
        )
    }

    #[test]
    fn homogeneous_constant_capacity_speeds_up_by_n() {
        let (cfg, cm, p) = setup([4, 4]);
        let dep = DeploymentConfig::new(vec![[4, 4]; 4]);
        let rep = run_series_deployment(&dep, &cfg, &cm, &p).unwrap();
        assert!((rep.speedup - 4.0).abs() < 1e-12, "{}", rep.speedup);
        for f in &rep.frames {
            assert!((f.baseline_latency_s / f.system_latency_s - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn comm_equal_to_compute_halves_the_ideal_speedup() {
        // constant C and Γ so the per-worker compute time is one number
        let (mut cfg, cm, p) = setup([6, 6]);
        cfg.scale_range = [0.5, 0.5];
        for n in [2usize, 4, 8] {
            let compute = cm.demand_of_scale(0.5).unwrap() / n as f64 / p.capacity(6.0).unwrap();
            let mut dep = DeploymentConfig::new(vec![[6, 6]; n]);
            dep.tau_comm = compute;
            let rep = run_series_deployment(&dep, &cfg, &cm, &p).unwrap();
            assert!((rep.speedup - n as f64 / 2.0).abs() < 1e-12, "n={n}: {}", rep.speedup);
        }
    }

    #[test]
    fn system_latency_is_the_slowest_worker() {
        let (cfg, cm, p) = setup([2, 4]);
        let mut dep = DeploymentConfig::new(vec![[2, 4], [4, 6], [6, 8], [8, 10]]);
        dep.tau_comm = 0.01;
        let rep = run_series_deployment(&dep, &cfg, &cm, &p).unwrap();
        for f in &rep.frames {
            let max = f.worker_latency_s.iter().cloned().fold(0.0, f64::max);
            assert_eq!(f.system_latency_s, max);
            assert!(f.worker_latency_s.iter().all(|&w| w <= f.system_latency_s));
        }
        for w in &rep.workers {
            assert!(rep.system_fps <= w.mean_fps);
            assert!(rep.system_mean_latency_s >= w.mean_latency_s);
        }
        assert_eq!(rep.workers.len(), 4);
        assert_eq!(rep.workers[3].thread_range, [8, 10]);
    }

    #[test]
    fn explicit_fractions_and_validation() {
        let (cfg, cm, p) = setup([2, 6]);
        let mut dep = DeploymentConfig::new(vec![[2, 6], [2, 6]]);
        dep.partition = Partition::Fractions(vec![0.25, 0.75]);
        let rep = run_series_deployment(&dep, &cfg, &cm, &p).unwrap();
        assert_eq!(rep.workers[1].fraction, 0.75);
        dep.partition = Partition::Fractions(vec![0.5, 0.6]);
        assert!(run_series_deployment(&dep, &cfg, &cm, &p).is_err());
        dep.partition = Partition::Fractions(vec![1.0]);
        assert!(run_series_deployment(&dep, &cfg, &cm, &p).is_err());
        let mut bad = DeploymentConfig::new(vec![[2, 6], [2, 30]]);
        assert!(run_series_deployment(&bad, &cfg, &cm, &p).is_err());
        bad.thread_ranges.pop();
        assert!(run_series_deployment(&bad, &cfg, &cm, &p).is_err());
        bad.n_workers = 0;
        bad.thread_ranges.clear();
        assert!(run_series_deployment(&bad, &cfg, &cm, &p).is_err());
    }

    #[test]
    fn partition_json_forms() {
        let d: DeploymentConfig =
            serde_json::from_str(r#"{"n_workers":2,"thread_ranges":[[2,4],[4,6]],"partition":"equal"}"#).unwrap();
        assert_eq!(d.partition, Partition::Equal);
        let d: DeploymentConfig =
            serde_json::from_str(r#"{"n_workers":2,"thread_ranges":[[2,4],[4,6]],"partition":{"fractions":[0.3,0.7]}}"#)
                .unwrap();
        assert_eq!(d.allocation().unwrap().fractions(), &[0.3, 0.7]);
    }

    #[test]
    fn frames_csv_layout_and_determinism() {
        let (cfg, cm, p) = setup([2, 6]);
        let dep = DeploymentConfig::new(vec![[2, 4], [4, 6]]);
        let write = || {
            let mut buf = Vec::new();
            run_series_deployment(&dep, &cfg, &cm, &p).unwrap().write_frames_csv(&mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = write();
        assert_eq!(a, write());
        assert!(a.starts_with("frame,demand_gflops,worker0_latency_s,worker1_latency_s,system_latency_s,baseline_latency_s\n"));
        assert_eq!(a.lines().count(), 601);
    }
}
