//! Newton-Armijo shooting on the initial multiplier.
//!
//! Each outer iteration linearizes the extremal flow, removes the rank
//! deficiency caused by the rotation symmetry and takes the minimum-norm
//! Newton direction. The inner loop backtracks along that direction until
//! the sufficient-decrease condition `err_t <= (1 - 2 alpha c) err` holds.

use std::time::{Duration, Instant};

use nalgebra::Vector6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{momentum_pi3, BodyParams, DiscreteState, ImplicitOptions};
use crate::error::Error;
use crate::extremal::{propagate_extremal_with, Costate, ExtremalTrajectory};
use crate::sensitivity::{
    accumulate_transition, raw_newton_step, reduce_and_pinv, symmetry_transform, terminal_error, transition_fd,
    TerminalError,
};

/// Tolerance on the vertical-momentum mismatch between the boundary states.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Boundary data of a maneuver.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub initial: DiscreteState,
    pub target: DiscreteState,
    pub steps: usize,
    pub h: f64,
    pub body: BodyParams,
}

impl ProblemSpec {
    pub fn new(
        initial: DiscreteState,
        target: DiscreteState,
        steps: usize,
        h: f64,
        body: BodyParams,
    ) -> Result<Self, Error> {
        if steps < 2 {
            return Err(Error::InvalidProblem(format!("horizon must have at least 2 steps, got {steps}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidProblem(format!("step size must be positive, got {h}")));
        }
        let initial_pi3 = momentum_pi3(&initial);
        let target_pi3 = momentum_pi3(&target);
        if !((initial_pi3 - target_pi3).abs() <= FEASIBILITY_TOL) {
            return Err(Error::InfeasibleProblem { initial: initial_pi3, terminal: target_pi3 });
        }
        Ok(Self { initial, target, steps, h, body })
    }

    /// Maneuver duration `N h`.
    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.h
    }
}

/// How the Newton direction is obtained from the sensitivity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectionMode {
    /// Inertial-momentum transform, drop the conserved row, pseudo-inverse.
    #[default]
    SymmetryReduced,
    /// Invert the untransformed 6x6 sensitivity. Diagnostic only.
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Stop once `||x'_N|| <= eps_s`.
    pub eps_s: f64,
    /// Armijo sufficient-decrease scale.
    pub alpha: f64,
    /// Backtracking factor applied to the step length `c`.
    pub c_shrink: f64,
    pub max_outer: usize,
    pub max_backtracks: usize,
    /// Central-difference step for the fallback sensitivity.
    pub fd_eps: f64,
    pub implicit: ImplicitOptions,
    pub seed: u64,
    pub direction: DirectionMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_s: 1e-10,
            alpha: 1e-4,
            c_shrink: 0.1,
            max_outer: 200,
            max_backtracks: 12,
            fd_eps: 1e-6,
            implicit: ImplicitOptions::default(),
            seed: 0,
            direction: DirectionMode::SymmetryReduced,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.eps_s > 0.0) {
            return Err(Error::InvalidConfig(format!("eps_s must be positive, got {}", self.eps_s)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if !(self.c_shrink > 0.0 && self.c_shrink < 1.0) {
            return Err(Error::InvalidConfig(format!("c_shrink must lie in (0, 1), got {}", self.c_shrink)));
        }
        if self.max_backtracks == 0 {
            return Err(Error::InvalidConfig("max_backtracks must be at least 1".into()));
        }
        if !(self.fd_eps > 0.0) {
            return Err(Error::InvalidConfig(format!("fd_eps must be positive, got {}", self.fd_eps)));
        }
        Ok(())
    }
}

/// One evaluated trial of the line search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRow {
    pub outer: usize,
    pub inner: usize,
    /// `||x'_N||` of the trial (infinite when the extremal could not be propagated).
    pub error: f64,
    /// Step length of the trial; 0 for the initial evaluation.
    pub c: f64,
    /// Condition number of the matrix inverted for the direction.
    pub cond: f64,
    /// Norm of the dropped row of the transformed sensitivity.
    pub last_row_norm: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<IterationRow>,
}

impl ConvergenceRecord {
    /// Errors of the initial guess and of every accepted trial, in order.
    pub fn accepted_errors(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.accepted).map(|r| r.error).collect()
    }

    pub fn outer_iterations(&self) -> usize {
        self.rows.iter().map(|r| r.outer).max().unwrap_or(0)
    }

    /// Every propagated trial, outer and inner combined.
    pub fn total_evaluations(&self) -> usize {
        self.rows.len()
    }

    /// Smallest and largest direction condition numbers seen.
    pub fn cond_range(&self) -> Option<(f64, f64)> {
        self.rows.iter().filter(|r| r.outer > 0).map(|r| r.cond).fold(None, |acc, c| match acc {
            None => Some((c, c)),
            Some((lo, hi)) => Some((lo.min(c), hi.max(c))),
        })
    }

    pub fn max_last_row_norm(&self) -> f64 {
        self.rows.iter().filter(|r| r.outer > 0).map(|r| r.last_row_norm).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// The line search found no decrease, even with a finite-difference direction.
    Stagnated,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: SolveStatus,
    pub lambda0: Costate,
    pub extremal: ExtremalTrajectory,
    pub cost: f64,
    pub terminal: TerminalError,
    /// `||x'_N||`.
    pub error: f64,
    pub record: ConvergenceRecord,
    pub wall_time: Duration,
}

/// The supplied guess, or seeded uniform components in `[-1, 1]`.
pub fn initialize_multiplier(config: &SolverConfig, guess: Option<Costate>) -> Costate {
    if let Some(guess) = guess {
        return guess;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let v = Vector6::from_fn(|_, _| rng.random_range(-1.0..=1.0));
    Costate::from_vector(&v)
}

struct Evaluated {
    lambda0: Costate,
    extremal: ExtremalTrajectory,
    terminal: TerminalError,
}

impl Evaluated {
    fn error(&self) -> f64 {
        self.terminal.norm()
    }
}

fn evaluate(problem: &ProblemSpec, config: &SolverConfig, lambda0: Costate) -> Result<Evaluated, Error> {
    let extremal =
        propagate_extremal_with(&problem.initial, &lambda0, problem.steps, &problem.body, problem.h, &config.implicit)?;
    let terminal = terminal_error(extremal.terminal(), problem);
    Ok(Evaluated { lambda0, extremal, terminal })
}

struct Direction {
    delta: Vector6<f64>,
    cond: f64,
    last_row_norm: f64,
}

fn direction(
    current: &Evaluated,
    problem: &ProblemSpec,
    config: &SolverConfig,
    use_fd: bool,
) -> Result<Direction, Error> {
    let psi = if use_fd {
        transition_fd(&problem.initial, &current.lambda0, &current.extremal, config.fd_eps, &config.implicit)?
    } else {
        accumulate_transition(&current.extremal)?
    };
    let transformed = symmetry_transform(&psi.psi12, current.extremal.terminal());
    match config.direction {
        DirectionMode::SymmetryReduced => {
            let step = reduce_and_pinv(&transformed, &current.terminal.reduced)?;
            Ok(Direction { delta: step.delta, cond: step.cond, last_row_norm: step.last_row_norm })
        }
        DirectionMode::Raw => {
            let (delta, cond) = raw_newton_step(&psi.psi12, &current.terminal.body_frame);
            Ok(Direction { delta, cond, last_row_norm: transformed.row(5).norm() })
        }
    }
}

/// Solves the two-point boundary value problem by Newton-Armijo shooting.
///
/// Returns [`Error::MaxIterations`] carrying the best iterate when the outer
/// loop runs out or the line search stalls.
pub fn solve(problem: &ProblemSpec, config: &SolverConfig, guess: Option<Costate>) -> Result<Solution, Error> {
    config.validate()?;
    let started = Instant::now();
    let lambda0 = initialize_multiplier(config, guess);
    let mut current = evaluate(problem, config, lambda0)?;
    let mut record = ConvergenceRecord::default();
    record.rows.push(IterationRow {
        outer: 0,
        inner: 0,
        error: current.error(),
        c: 0.0,
        cond: 0.0,
        last_row_norm: 0.0,
        accepted: true,
    });

    let mut outer = 0;
    let mut status = SolveStatus::Converged;
    while current.error() > config.eps_s {
        if outer == config.max_outer {
            status = SolveStatus::MaxIterations;
            break;
        }
        outer += 1;

        let mut next = None;
        for use_fd in [false, true] {
            let dir = match direction(&current, problem, config, use_fd) {
                Ok(dir) => dir,
                Err(e) if use_fd => return Err(e),
                Err(Error::IllConditioned { .. } | Error::SingularVariation { .. }) => continue,
                Err(e) => return Err(e),
            };
            next = line_search(&current, &dir, problem, config, outer, &mut record);
            if next.is_some() {
                break;
            }
        }
        match next {
            Some(trial) => current = trial,
            None => {
                status = SolveStatus::Stagnated;
                break;
            }
        }
    }

    let solution = Solution {
        status,
        lambda0: current.lambda0,
        cost: current.extremal.cost,
        error: current.error(),
        terminal: current.terminal,
        extremal: current.extremal,
        record,
        wall_time: started.elapsed(),
    };
    match status {
        SolveStatus::Converged => Ok(solution),
        _ => Err(Error::MaxIterations(Box::new(solution))),
    }
}

/// Backtracking along `dir`. Returns the accepted trial, or the best trial
/// that still lowers the error once the backtracking budget is spent.
fn line_search(
    current: &Evaluated,
    dir: &Direction,
    problem: &ProblemSpec,
    config: &SolverConfig,
    outer: usize,
    record: &mut ConvergenceRecord,
) -> Option<Evaluated> {
    let base = current.lambda0.to_vector();
    let error = current.error();
    let mut best: Option<(Evaluated, usize)> = None;
    let mut c = 1.0;
    for inner in 1..=config.max_backtracks {
        let lambda_t = Costate::from_vector(&(base + c * dir.delta));
        let trial = if lambda_t.is_finite() { evaluate(problem, config, lambda_t).ok() } else { None };
        let trial_error = trial.as_ref().map_or(f64::INFINITY, Evaluated::error);
        let accepted = trial_error <= (1.0 - 2.0 * config.alpha * c) * error;
        record.rows.push(IterationRow {
            outer,
            inner,
            error: trial_error,
            c,
            cond: dir.cond,
            last_row_norm: dir.last_row_norm,
            accepted,
        });
        if accepted {
            return trial;
        }
        if let Some(trial) = trial {
            if trial_error < error && best.as_ref().is_none_or(|(b, _)| trial_error < b.error()) {
                best = Some((trial, record.rows.len() - 1));
            }
        }
        c *= config.c_shrink;
    }
    best.map(|(trial, row)| {
        record.rows[row].accepted = true;
        trial
    })
}
