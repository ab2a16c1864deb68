//! wasm-bindgen exports for the static page in `www/`.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page has a single code path.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use riccati_core::certify::{
    certify, monitor_invariant, scan_initial_values, CertReport, InitialFamily, MonitorVerdict,
    DEFAULT_MONITOR_TOL,
};
use riccati_core::config::linspace;
use riccati_core::integrate::{integrate_riccati, IntegratorOptions, Trajectory, TrajectoryStatus};
use riccati_core::matrix::c64;
use riccati_core::riccati::{Certificate, DEFAULT_GRID_DENSITY};
use riccati_core::suite;
use riccati_core::{CMatrix, MatrixTimeFn, RiccatiProblem};

/// Plots never need more points than this.
const MAX_PLOT_POINTS: usize = 800;

#[derive(Serialize)]
struct ErrorJson {
    error: String,
}

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).expect("demo output serializes"),
        Err(error) => serde_json::to_string(&ErrorJson { error }).expect("string serializes"),
    }
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_PLOT_POINTS).max(1)
}

#[derive(Serialize)]
struct Series {
    t: Vec<f64>,
    norm: Vec<f64>,
    min_eig: Vec<f64>,
}

fn series(traj: &Trajectory) -> Series {
    let step = stride(traj.times.len());
    let mut s = Series {
        t: vec![],
        norm: vec![],
        min_eig: vec![],
    };
    let last = traj.times.len().saturating_sub(1);
    for (i, (t, d)) in traj.times.iter().zip(&traj.diagnostics).enumerate() {
        if i % step == 0 || i == last {
            s.t.push(*t);
            s.norm.push(d.norm);
            s.min_eig.push(d.min_hermitian_eig);
        }
    }
    s
}

#[derive(Serialize)]
pub struct ExampleInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub dim: usize,
}

/// Bundled problems as `[{name, summary, dim}]`.
#[wasm_bindgen]
pub fn example_names() -> String {
    let list: Vec<ExampleInfo> = suite::all()
        .iter()
        .map(|e| ExampleInfo {
            name: e.name,
            summary: e.summary,
            dim: e.problem.dim(),
        })
        .collect();
    to_json(Ok(list))
}

#[derive(Serialize)]
struct ScalarOutput {
    status: TrajectoryStatus,
    t_end: f64,
    z: Vec<f64>,
    t: Vec<f64>,
    report: CertReport,
}

/// Real scalar equation `z' + p z^2 + (q + r) z + s = 0` from `z(0) = z0`,
/// checked against the certificate `U = 1`, `Lambda = lambda`.
#[wasm_bindgen]
pub fn solve_scalar(p: f64, q: f64, r: f64, s: f64, z0: f64, lambda: f64, horizon: f64) -> String {
    to_json(scalar_run(p, q, r, s, z0, lambda, horizon))
}

fn scalar_run(
    p: f64,
    q: f64,
    r: f64,
    s: f64,
    z0: f64,
    lambda: f64,
    horizon: f64,
) -> Result<ScalarOutput, String> {
    let k = |x: f64| MatrixTimeFn::constant(&CMatrix::scalar(1, c64(x, 0.0)));
    let prob =
        RiccatiProblem::new(k(p), k(q), k(r), k(s), 0.0, horizon).map_err(|e| e.to_string())?;
    let cert = Certificate::new(k(1.0), k(lambda), None, DEFAULT_GRID_DENSITY, 1e-9)
        .map_err(|e| e.to_string())?;
    let z0 = CMatrix::scalar(1, c64(z0, 0.0));
    let report = certify(&cert, &prob, &z0).map_err(|e| e.to_string())?;
    let traj =
        integrate_riccati(&prob, &z0, &IntegratorOptions::default()).map_err(|e| e.to_string())?;
    let step = stride(traj.times.len());
    let last = traj.times.len().saturating_sub(1);
    let keep: Vec<usize> = (0..traj.times.len())
        .filter(|i| i % step == 0 || *i == last)
        .collect();
    Ok(ScalarOutput {
        status: traj.status,
        t_end: traj.t_end(),
        t: keep.iter().map(|&i| traj.times[i]).collect(),
        z: keep.iter().map(|&i| traj.z[i].as_slice()[0].re).collect(),
        report,
    })
}

#[derive(Serialize)]
struct CertifyOutput {
    name: &'static str,
    report: CertReport,
    status: Option<TrajectoryStatus>,
    monitor: Option<MonitorVerdict>,
    series: Option<Series>,
    /// Monitored gap eigenvalue, sampled like `series`.
    gap: Vec<(f64, f64)>,
}

/// Certifies a bundled problem and, when certified, integrates and monitors it.
#[wasm_bindgen]
pub fn certify_example(name: &str) -> String {
    to_json(certify_run(name))
}

fn certify_run(name: &str) -> Result<CertifyOutput, String> {
    let e = suite::by_name(name).ok_or_else(|| format!("unknown example {name:?}"))?;
    let report = certify(&e.certificate, &e.problem, &e.z0).map_err(|err| err.to_string())?;
    if !report.verdict.is_certified() {
        return Ok(CertifyOutput {
            name: e.name,
            report,
            status: None,
            monitor: None,
            series: None,
            gap: vec![],
        });
    }
    let traj = integrate_riccati(&e.problem, &e.z0, &IntegratorOptions::default())
        .map_err(|err| err.to_string())?;
    let monitor = monitor_invariant(
        &e.certificate,
        &traj,
        report.verdict.branch(),
        DEFAULT_MONITOR_TOL,
    );
    let step = stride(monitor.records.len());
    let gap = monitor
        .records
        .iter()
        .step_by(step)
        .map(|r| (r.t, r.gap_min_eigenvalue))
        .collect();
    Ok(CertifyOutput {
        name: e.name,
        report,
        status: Some(traj.status),
        monitor: Some(monitor.verdict),
        series: Some(series(&traj)),
        gap,
    })
}

#[derive(Serialize)]
struct ScanOutput {
    name: &'static str,
    rows: Vec<riccati_core::certify::ScanRow>,
}

/// Scans `Z0 + alpha I` for a bundled problem, `count` values of alpha in `[from, to]`.
#[wasm_bindgen]
pub fn scan_example(name: &str, from: f64, to: f64, count: usize) -> String {
    to_json(scan_run(name, from, to, count))
}

fn scan_run(name: &str, from: f64, to: f64, count: usize) -> Result<ScanOutput, String> {
    let e = suite::by_name(name).ok_or_else(|| format!("unknown example {name:?}"))?;
    if !(1..=200).contains(&count) || !from.is_finite() || !to.is_finite() {
        return Err("count must be in 1..=200 and the range finite".into());
    }
    let family = InitialFamily {
        base: e.z0.clone(),
        direction: CMatrix::identity(e.problem.dim()),
        alphas: linspace(from, to, count),
    };
    // Threads are unavailable in the browser.
    let rows = scan_initial_values(
        &e.certificate,
        &e.problem,
        &family,
        &IntegratorOptions::default(),
        false,
    )
    .map_err(|err| err.to_string())?;
    Ok(ScanOutput { name: e.name, rows })
}
