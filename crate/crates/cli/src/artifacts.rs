//! Trajectory and convergence CSV files and the run summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pendulum_core::dynamics::{energy, momentum_pi3, BodyParams, StateTrajectory};
use pendulum_core::extremal::Costate;
use pendulum_core::phase::ReducedTrajectory;
use pendulum_core::shooting::ConvergenceRecord;
use pendulum_core::so3::Vec3;
use serde::Serialize;

use crate::config::ConfigFile;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub const TRAJECTORY_HEADER: [&str; 25] = [
    "k",
    "t",
    "R11",
    "R12",
    "R13",
    "R21",
    "R22",
    "R23",
    "R31",
    "R32",
    "R33",
    "Pi1",
    "Pi2",
    "Pi3",
    "u1",
    "u2",
    "u3",
    "lambda1_1",
    "lambda1_2",
    "lambda1_3",
    "lambda2_1",
    "lambda2_2",
    "lambda2_3",
    "pi3",
    "energy",
];

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn push_vec(record: &mut Vec<String>, v: Option<&Vec3>) {
    match v {
        Some(v) => record.extend(v.iter().map(|x| num(*x))),
        None => record.extend(std::iter::repeat_n(String::new(), 3)),
    }
}

/// Row `k` holds state `k`, the input `u_k` that produced it (empty at
/// `k = 0`) and the multiplier `lambda_k` (empty at `k = N` or when absent).
pub fn write_trajectory(
    path: &Path,
    traj: &StateTrajectory,
    costates: Option<&[Costate]>,
    body: &BodyParams,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(TRAJECTORY_HEADER)?;
    for (k, state) in traj.states.iter().enumerate() {
        let mut record = Vec::with_capacity(TRAJECTORY_HEADER.len());
        record.push(k.to_string());
        record.push(num(k as f64 * traj.h));
        for i in 0..3 {
            for j in 0..3 {
                record.push(num(state.r.matrix()[(i, j)]));
            }
        }
        push_vec(&mut record, Some(&state.pi));
        push_vec(&mut record, k.checked_sub(1).and_then(|j| traj.controls.get(j)));
        let lambda = costates.and_then(|c| c.get(k));
        push_vec(&mut record, lambda.map(|l| &l.lambda1));
        push_vec(&mut record, lambda.map(|l| &l.lambda2));
        record.push(num(momentum_pi3(state)));
        record.push(num(energy(state, body)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence(path: &Path, record: &ConvergenceRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["outer", "inner", "error", "c", "cond", "last_row_norm", "accepted"])?;
    for row in &record.rows {
        w.write_record([
            row.outer.to_string(),
            row.inner.to_string(),
            num(row.error),
            num(row.c),
            num(row.cond),
            num(row.last_row_norm),
            row.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the reduced loop `Gamma_k = R_k^T e3` (the third row of `R_k`)
/// back from a trajectory CSV.
pub fn read_reduced_loop(path: &Path) -> Result<ReducedTrajectory> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let index = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).with_context(|| format!("{} has no `{name}` column", path.display()))
    };
    let cols = [index("R31")?, index("R32")?, index("R33")?];
    let mut points = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut p = Vec3::zeros();
        for (i, &c) in cols.iter().enumerate() {
            let field = rec.get(c).unwrap_or_default();
            p[i] = field.parse().with_context(|| format!("row {}: bad number `{field}`", line + 1))?;
        }
        points.push(p);
    }
    if points.len() < 2 {
        bail!("{} holds fewer than two states", path.display());
    }
    Ok(ReducedTrajectory::new(points)?)
}

/// Machine-readable record of one run. Only `wall_time_s` varies between
/// identical runs.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunSummary {
    pub status: String,
    pub mode: String,
    pub case: Option<String>,
    pub message: Option<String>,
    pub steps: Option<usize>,
    pub h: Option<f64>,
    pub seed: Option<u64>,
    /// Performance index `sum h/2 ||u||^2`.
    pub cost: Option<f64>,
    /// `||logm(R_N^d^T R_N)||`.
    pub attitude_error: Option<f64>,
    /// `||Pi_N^d - Pi_N||`.
    pub momentum_error: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub total_evaluations: Option<usize>,
    pub cond_min: Option<f64>,
    pub cond_max: Option<f64>,
    pub last_row_norm_max: Option<f64>,
    pub lambda0: Option<[f64; 6]>,
    pub theta_geo: Option<f64>,
    pub enclosed_area: Option<f64>,
    pub yaw: Option<f64>,
    pub pi3_drift: Option<f64>,
    pub orthogonality_max: Option<f64>,
    pub energy_range: Option<f64>,
    pub wall_time_s: f64,
    pub config: ConfigFile,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
