//! Executes resolved runs and writes their artifacts.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use pendulum_core::dynamics::{energy, integrate, momentum_pi3, StateTrajectory};
use pendulum_core::extremal::propagate_extremal;
use pendulum_core::phase::{surface_phase, yaw_between, PhaseEstimate, ReducedTrajectory};
use pendulum_core::shooting::{solve, Solution, SolveStatus};
use pendulum_core::so3::Vec3;
use pendulum_core::Error as CoreError;

use crate::artifacts::{
    read_reduced_loop, write_convergence, write_summary, write_trajectory, RunSummary, CONVERGENCE_FILE, SUMMARY_FILE,
    TRAJECTORY_FILE,
};
use crate::config::{ConfigError, Mode, RunConfig};

/// Environment variable capping the number of cases solved at once.
pub const MAX_JOBS_ENV: &str = "PENDULUM3D_MAX_JOBS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success = 0,
    MaxIterations = 2,
    Validation = 3,
    Numerical = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn label(self) -> &'static str {
        match self {
            ExitStatus::Success => "ok",
            ExitStatus::MaxIterations => "max_iterations",
            ExitStatus::Validation => "validation_error",
            ExitStatus::Numerical => "numerical_failure",
        }
    }
}

/// Validation-class core errors: the inputs were wrong, not the numerics.
fn classify(e: &CoreError) -> ExitStatus {
    match e.root() {
        CoreError::InfeasibleProblem { .. }
        | CoreError::InvalidProblem(_)
        | CoreError::InvalidConfig(_)
        | CoreError::InvalidBody(_)
        | CoreError::NotRotation { .. }
        | CoreError::OpenLoop { .. } => ExitStatus::Validation,
        CoreError::MaxIterations(_) => ExitStatus::MaxIterations,
        _ => ExitStatus::Numerical,
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub out: PathBuf,
    pub summary: RunSummary,
}

fn base_summary(cfg: &RunConfig) -> RunSummary {
    RunSummary {
        mode: cfg.mode.to_string(),
        case: cfg.case.map(|c| c.to_string()),
        steps: Some(cfg.steps),
        h: Some(cfg.h),
        seed: Some(cfg.solver.seed),
        config: cfg.echo.clone(),
        ..RunSummary::default()
    }
}

fn set_phase(summary: &mut RunSummary, phase: &PhaseEstimate) {
    summary.theta_geo = Some(phase.theta);
    summary.enclosed_area = Some(phase.area);
}

/// Phase and yaw when the reduced loop closes; silently absent otherwise.
fn loop_diagnostics(summary: &mut RunSummary, traj: &StateTrajectory, cfg: &RunConfig) {
    let reduced = ReducedTrajectory::from_trajectory(traj);
    if let Ok(phase) = surface_phase(&reduced, &cfg.body.inertia) {
        set_phase(summary, &phase);
    }
    summary.yaw = yaw_between(&traj.states[0].r, &traj.last().r).ok();
}

fn flow_diagnostics(summary: &mut RunSummary, traj: &StateTrajectory, cfg: &RunConfig) {
    let pi3 = momentum_pi3(&traj.states[0]);
    summary.pi3_drift = Some(traj.states.iter().map(|s| (momentum_pi3(s) - pi3).abs()).fold(0.0, f64::max));
    summary.orthogonality_max = Some(traj.states.iter().map(|s| s.r.orthogonality_defect()).fold(0.0, f64::max));
    let (lo, hi) = traj
        .states
        .iter()
        .map(|s| energy(s, &cfg.body))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
    summary.energy_range = Some(hi - lo);
}

fn simulate(cfg: &RunConfig, summary: &mut RunSummary) -> Result<ExitStatus> {
    let (traj, costates, cost) = if let Some(lambda0) = &cfg.lambda0 {
        match propagate_extremal(&cfg.initial, lambda0, cfg.steps, &cfg.body, cfg.h) {
            Ok(ext) => (ext.trajectory, Some(ext.costates), Some(ext.cost)),
            Err(e) => return Ok(fail(summary, &e)),
        }
    } else {
        let zero;
        let controls = match &cfg.controls {
            Some(c) => c.as_slice(),
            None => {
                zero = vec![Vec3::zeros(); cfg.steps];
                zero.as_slice()
            }
        };
        match integrate(&cfg.initial, controls, &cfg.body, cfg.h) {
            Ok(traj) => {
                let cost = controls.iter().map(|u| 0.5 * cfg.h * u.norm_squared()).sum();
                (traj, None, Some(cost))
            }
            Err(e) => return Ok(fail(summary, &e)),
        }
    };
    summary.cost = cost;
    flow_diagnostics(summary, &traj, cfg);
    loop_diagnostics(summary, &traj, cfg);
    write_trajectory(&cfg.out.join(TRAJECTORY_FILE), &traj, costates.as_deref(), &cfg.body)?;
    Ok(ExitStatus::Success)
}

fn fill_solution(summary: &mut RunSummary, sol: &Solution, cfg: &RunConfig) {
    summary.cost = Some(sol.cost);
    summary.attitude_error = Some(sol.terminal.attitude_norm);
    summary.momentum_error = Some(sol.terminal.momentum_norm);
    summary.outer_iterations = Some(sol.record.outer_iterations());
    summary.total_evaluations = Some(sol.record.total_evaluations());
    if let Some((lo, hi)) = sol.record.cond_range() {
        summary.cond_min = Some(lo);
        summary.cond_max = Some(hi);
    }
    summary.last_row_norm_max = Some(sol.record.max_last_row_norm());
    let v = sol.lambda0.to_vector();
    summary.lambda0 = Some([v[0], v[1], v[2], v[3], v[4], v[5]]);
    flow_diagnostics(summary, &sol.extremal.trajectory, cfg);
    loop_diagnostics(summary, &sol.extremal.trajectory, cfg);
}

fn solve_mode(cfg: &RunConfig, summary: &mut RunSummary) -> Result<ExitStatus> {
    let problem = match cfg.problem() {
        Ok(p) => p,
        Err(e) => {
            summary.message = Some(e.to_string());
            return Ok(ExitStatus::Validation);
        }
    };
    let (sol, status) = match solve(&problem, &cfg.solver, cfg.lambda0) {
        Ok(sol) => (sol, ExitStatus::Success),
        Err(CoreError::MaxIterations(sol)) => {
            summary.message = Some(format!("{:?} at error {:e}", sol.status, sol.error));
            (*sol, ExitStatus::MaxIterations)
        }
        Err(e) => return Ok(fail(summary, &e)),
    };
    fill_solution(summary, &sol, cfg);
    write_trajectory(
        &cfg.out.join(TRAJECTORY_FILE),
        &sol.extremal.trajectory,
        Some(&sol.extremal.costates),
        &cfg.body,
    )?;
    write_convergence(&cfg.out.join(CONVERGENCE_FILE), &sol.record)?;
    if status == ExitStatus::Success {
        summary.status = "converged".into();
    } else {
        summary.status = match sol.status {
            SolveStatus::Stagnated => "stagnated",
            _ => "max_iterations",
        }
        .into();
    }
    Ok(status)
}

fn phase_mode(cfg: &RunConfig, summary: &mut RunSummary) -> Result<ExitStatus> {
    let path = cfg.trajectory.as_deref().context("phase mode needs a trajectory path")?;
    let reduced = match read_reduced_loop(path) {
        Ok(r) => r,
        Err(e) => {
            summary.message = Some(format!("{e:#}"));
            return Ok(ExitStatus::Validation);
        }
    };
    match surface_phase(&reduced, &cfg.body.inertia) {
        Ok(phase) => {
            set_phase(summary, &phase);
            Ok(ExitStatus::Success)
        }
        Err(e) => Ok(fail(summary, &e)),
    }
}

fn fail(summary: &mut RunSummary, e: &CoreError) -> ExitStatus {
    summary.message = Some(e.to_string());
    classify(e)
}

/// Runs one resolved config, writing its artifacts under `cfg.out`. The
/// summary is written on every path, including failures.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let started = Instant::now();
    let mut summary = base_summary(cfg);
    let status = match cfg.mode {
        Mode::Simulate => simulate(cfg, &mut summary)?,
        Mode::Solve => solve_mode(cfg, &mut summary)?,
        Mode::Phase => phase_mode(cfg, &mut summary)?,
    };
    if summary.status.is_empty() {
        summary.status = status.label().into();
    }
    summary.wall_time_s = started.elapsed().as_secs_f64();
    write_summary(&cfg.out.join(SUMMARY_FILE), &summary)?;
    Ok(RunOutcome { status, out: cfg.out.clone(), summary })
}

/// Writes a summary for a config that never resolved.
pub fn write_validation_failure(out: &Path, mode: Mode, error: &ConfigError) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let summary = RunSummary {
        status: ExitStatus::Validation.label().into(),
        mode: mode.to_string(),
        message: Some(error.to_string()),
        ..RunSummary::default()
    };
    write_summary(&out.join(SUMMARY_FILE), &summary)
}

pub fn max_jobs() -> usize {
    std::env::var(MAX_JOBS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every config, at most `jobs` at a time, returning outcomes in input
/// order.
pub fn run_batch(configs: &[RunConfig], jobs: usize) -> Vec<Result<RunOutcome>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutcome>>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, configs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let outcome = run(cfg);
                *slots[i].lock().expect("result slot") = Some(outcome);
            });
        }
    });
    slots.into_iter().map(|slot| slot.into_inner().expect("result slot").expect("every config is run")).collect()
}
