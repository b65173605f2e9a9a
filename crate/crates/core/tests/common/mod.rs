//! Shared generators and comparisons for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xecrel::mcoracle::McEstimate;
use xecrel::probkernel::{Bounds, Marginal, SimRng};
use xecrel::reliability::{DeviceModel, QosThreshold};

pub fn q(t: f64) -> QosThreshold {
    QosThreshold::new(t).unwrap()
}

pub fn b(lo: f64, hi: f64) -> Bounds {
    Bounds::physical(lo, hi).unwrap()
}

/// 3σ agreement of an MC estimate with a reference value: inside the
/// estimate's own band widened by `slack`, or within 3σ under the reference
/// (continuity-corrected), which also covers estimates of exactly 0 or 1.
pub fn agrees(est: &McEstimate, p: f64, slack: f64) -> bool {
    (est.estimate - p).abs() <= est.half_width() + slack || est.z_score(p) <= 3.0
}

/// Bounds with lo ∈ [10, 200) and hi/lo ∈ [1.1, 4).
pub fn random_bounds(rng: &mut SimRng) -> Bounds {
    let lo = rng.uniform(10.0, 200.0);
    b(lo, lo * rng.uniform(1.1, 4.0))
}

/// Θ drawn inside the support of C/Δ, so R is neither trivially 0 nor 1.
pub fn random_theta(c: Bounds, d: Bounds, rng: &mut SimRng) -> f64 {
    rng.uniform(c.lo() / d.hi(), c.hi() / d.lo())
}

/// Truncated normal on `bounds` with μ within a quarter range of the bounds
/// and σ ∈ [0.1, 1.5)·range; redrawn while the normalizer underflows.
pub fn random_truncnorm(bounds: Bounds, rng: &mut SimRng) -> Marginal {
    loop {
        let r = bounds.range();
        let mu = rng.uniform(bounds.lo() - 0.25 * r, bounds.hi() + 0.25 * r);
        let sigma = r * rng.uniform(0.1, 1.5);
        if let Ok(m) = Marginal::truncnorm(mu, sigma, bounds) {
            return m;
        }
    }
}

pub fn random_mi_device(label: &str, rng: &mut SimRng) -> DeviceModel {
    let c = random_bounds(rng);
    let d = random_bounds(rng);
    DeviceModel::minimal_information(label, c, d).unwrap()
}

pub fn random_hist_device(label: &str, rng: &mut SimRng) -> DeviceModel {
    let c = random_bounds(rng);
    let d = random_bounds(rng);
    let cm = random_truncnorm(c, rng);
    let dm = random_truncnorm(d, rng);
    DeviceModel::new(label, cm, dm).unwrap()
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_xecrel")
}

/// Runs the binary with `XECREL_OUTPUT_DIR` pointed at `dir`.
pub fn xecrel(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env("XECREL_OUTPUT_DIR", dir)
        .output()
        .expect("binary runs")
}

pub fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| {
        panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr))
    })
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

/// Every regular file under `dir`, relative path first, sorted.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
