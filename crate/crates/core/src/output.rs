//! Result files of a run or a sweep.
//!
//! | file              | columns                                                  |
//! |-------------------|----------------------------------------------------------|
//! | `trajectory.csv`  | `n, x_m, y_m` for `n = 0..=N`                            |
//! | `allocation.csv`  | `n, k, beta` for `n = 1..=N`, devices 1-based            |
//! | `power.csv`       | `n, p_uav_w` for `n = 1..=N`                             |
//! | `iterations.csv`  | `iteration, eta, merit, served`, then per block status, Newton steps and KKT residual |
//! | `report.json`     | the full run report                                      |
//! | `sweep.csv`       | `param, value, status, eta_final, eta_exact, min_radar_slack, iterations` |
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! gives the exact values. Wall-clock times only go to the JSON files, which
//! keeps the CSV outputs of identical invocations byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bound::Decision;
use crate::convexify::SubproblemKind;
use crate::driver::RunReport;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scenario::Scenario;

fn out_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| out_err(path, e))
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| out_err(path, e))
}

/// Shortest round-trip text, in exponent form for very small or large values.
fn f(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn write_trajectory(path: &Path, dec: &Decision) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |e| out_err(path, e);
    w.write_record(["n", "x_m", "y_m"]).map_err(e)?;
    for (n, q) in dec.trajectory.iter().enumerate() {
        w.write_record([n.to_string(), f(q.x), f(q.y)]).map_err(e)?;
    }
    finish(path, w)
}

pub fn write_allocation(path: &Path, dec: &Decision) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |e| out_err(path, e);
    w.write_record(["n", "k", "beta"]).map_err(e)?;
    for n in 1..=dec.num_slots() {
        for (k, row) in dec.beta.iter().enumerate() {
            w.write_record([n.to_string(), (k + 1).to_string(), f(row[n])]).map_err(e)?;
        }
    }
    finish(path, w)
}

pub fn write_power(path: &Path, dec: &Decision) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |e| out_err(path, e);
    w.write_record(["n", "p_uav_w"]).map_err(e)?;
    for n in 1..=dec.num_slots() {
        w.write_record([n.to_string(), f(dec.power[n])]).map_err(e)?;
    }
    finish(path, w)
}

fn block_name(b: SubproblemKind) -> &'static str {
    match b {
        SubproblemKind::P3 => "allocation",
        SubproblemKind::P5 => "trajectory",
        SubproblemKind::P7 => "power",
    }
}

pub fn write_iterations(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |e| out_err(path, e);
    let blocks: Vec<SubproblemKind> =
        report.iterations.first().map(|it| it.blocks.iter().map(|b| b.block).collect()).unwrap_or_default();
    let mut header = vec!["iteration".to_string(), "eta".into(), "merit".into(), "served".into()];
    for b in &blocks {
        let name = block_name(*b);
        header.push(format!("{name}_status"));
        header.push(format!("{name}_newton_steps"));
        header.push(format!("{name}_kkt_residual"));
    }
    w.write_record(&header).map_err(e)?;
    w.write_record(
        ["0".to_string(), f(report.initial_eta), String::new(), String::new()]
            .into_iter()
            .chain(blocks.iter().flat_map(|_| [String::new(), String::new(), String::new()])),
    )
    .map_err(e)?;
    for it in &report.iterations {
        let mut row = vec![it.iteration.to_string(), f(it.eta), f(it.merit), it.served.to_string()];
        for b in &it.blocks {
            let status = match (b.status, b.accepted) {
                (None, _) => "skipped".to_string(),
                (Some(s), true) => format!("{s:?}").to_lowercase(),
                (Some(s), false) => format!("{}_rejected", format!("{s:?}").to_lowercase()),
            };
            row.push(status);
            row.push((b.phase1_steps + b.newton_steps).to_string());
            row.push(f(b.kkt_residual));
        }
        w.write_record(&row).map_err(e)?;
    }
    finish(path, w)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| out_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| out_err(path, e))?;
    writeln!(w).map_err(|e| out_err(path, e))?;
    w.flush().map_err(|e| out_err(path, e))
}

/// Writes every per-run file into `dir`, creating it if needed.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
    write_trajectory(&dir.join("trajectory.csv"), &report.decision)?;
    write_allocation(&dir.join("allocation.csv"), &report.decision)?;
    write_power(&dir.join("power.csv"), &report.decision)?;
    write_iterations(&dir.join("iterations.csv"), report)?;
    write_json(&dir.join("report.json"), report)
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| out_err(path, e))?;
    r.records().collect::<std::result::Result<_, _>>().map_err(|e| out_err(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| out_err(path, format!("bad field {i} in record {rec:?}")))
}

/// Rebuilds the final decision from the three CSV files of a run.
pub fn read_decision(dir: &Path, sc: &Scenario) -> Result<Decision> {
    let mut dec = Decision::hover(sc, 0.0);
    let path = dir.join("trajectory.csv");
    let rows = records(&path)?;
    if rows.len() != sc.num_slots + 1 {
        return Err(out_err(&path, format!("expected {} waypoints, found {}", sc.num_slots + 1, rows.len())));
    }
    for rec in &rows {
        let n: usize = field(&path, rec, 0)?;
        dec.trajectory[n] = Point2::new(field(&path, rec, 1)?, field(&path, rec, 2)?);
    }
    let path = dir.join("allocation.csv");
    for rec in &records(&path)? {
        let (n, k): (usize, usize) = (field(&path, rec, 0)?, field(&path, rec, 1)?);
        if n == 0 || n > sc.num_slots || k == 0 || k > sc.num_devices() {
            return Err(out_err(&path, format!("index out of range in {rec:?}")));
        }
        dec.beta[k - 1][n] = field(&path, rec, 2)?;
    }
    let path = dir.join("power.csv");
    for rec in &records(&path)? {
        let n: usize = field(&path, rec, 0)?;
        if n == 0 || n > sc.num_slots {
            return Err(out_err(&path, format!("slot out of range in {rec:?}")));
        }
        dec.power[n] = field(&path, rec, 1)?;
    }
    Ok(dec)
}

/// `(η, exact η)` recorded for the final decision in `report.json`.
pub fn read_recorded_eta(dir: &Path) -> Result<(f64, f64)> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| out_err(&path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| out_err(&path, e))?;
    let get = |key: &str| {
        v["audit_original"][key].as_f64().ok_or_else(|| out_err(&path, format!("missing audit_original.{key}")))
    };
    Ok((get("eta")?, get("eta_exact")?))
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    /// `ok`, or the error that stopped this value.
    pub status: String,
    pub eta_final: Option<f64>,
    pub eta_exact: Option<f64>,
    /// Smallest relative margin `(γ − γ_th)/γ_th` over slots of the final
    /// decision, exact radar model.
    pub min_radar_slack: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time_s: f64,
}

impl SweepRow {
    pub fn from_report(param: &str, value: f64, report: &RunReport) -> Self {
        let th = report.sensing_threshold;
        let slack = report.audit_original.min_radar_sinr.iter().map(|s| (s - th) / th).fold(f64::INFINITY, f64::min);
        SweepRow {
            param: param.into(),
            value,
            status: "ok".into(),
            eta_final: Some(report.eta_relaxed),
            eta_exact: Some(report.eta_original),
            min_radar_slack: Some(slack),
            iterations: Some(report.iterations.len()),
            wall_time_s: report.wall_time_s,
        }
    }

    pub fn failed(param: &str, value: f64, err: &Error) -> Self {
        SweepRow {
            param: param.into(),
            value,
            status: err.to_string(),
            eta_final: None,
            eta_exact: None,
            min_radar_slack: None,
            iterations: None,
            wall_time_s: 0.0,
        }
    }
}

/// Writes `sweep.csv` and `sweep.json`; only the latter carries wall times.
pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
    let path = dir.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    let e = |e| out_err(&path, e);
    w.write_record(["param", "value", "status", "eta_final", "eta_exact", "min_radar_slack", "iterations"])
        .map_err(e)?;
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.param.clone(),
            f(r.value),
            r.status.clone(),
            opt(r.eta_final),
            opt(r.eta_exact),
            opt(r.min_radar_slack),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
        ])
        .map_err(e)?;
    }
    finish(&path, w)?;
    write_json(&dir.join("sweep.json"), &rows)
}
