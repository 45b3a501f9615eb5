//! The controlled 3D pendulum and its Lie group variational integrator.
//!
//! One step of the discrete flow solves the implicit relation
//! `h S(Pi_k) = F_k J_d - J_d F_k^T` for the relative attitude `F_k`, then
//! updates
//!
//! ```text
//! R_{k+1}  = R_k F_k
//! Pi_{k+1} = F_k^T Pi_k + h m g rho x R_{k+1}^T e3 + h R_{k+1}^T e3 x u_{k+1}
//! ```
//!
//! Attitudes are only ever updated by group multiplication, so the flow stays
//! on SO(3) to roundoff. The control enters as a moment with no component
//! about gravity, so the vertical inertial momentum `e3^T R Pi` is conserved
//! step to step.

use nalgebra::Matrix3;

use crate::error::Error;
use crate::so3::{e3, exp_so3, hat, right_jacobian, vee_skew_part, Mat3, RotationMatrix, Vec3};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Physical parameters of a rigid pendulum about its pivot.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyParams {
    pub mass: f64,
    pub gravity: f64,
    /// Inertia about the pivot, body frame.
    pub inertia: Mat3,
    /// `J_d = tr(J)/2 I - J`.
    pub inertia_d: Mat3,
    /// Pivot to mass center, body frame.
    pub rho: Vec3,
    inertia_inv: Mat3,
}

impl BodyParams {
    pub fn new(mass: f64, gravity: f64, inertia: Mat3, rho: Vec3) -> Result<Self, Error> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidBody(format!("mass must be positive, got {mass}")));
        }
        if !gravity.is_finite() {
            return Err(Error::InvalidBody("gravity must be finite".into()));
        }
        if !inertia.iter().chain(rho.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidBody("non-finite inertia or mass-center offset".into()));
        }
        if (inertia - inertia.transpose()).norm() > 1e-12 * inertia.norm() {
            return Err(Error::InvalidBody("inertia matrix is not symmetric".into()));
        }
        let eig = inertia.symmetric_eigenvalues();
        if eig.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidBody(format!(
                "inertia matrix is not positive definite (eigenvalues {:?})",
                eig.as_slice()
            )));
        }
        let inertia_inv =
            inertia.try_inverse().ok_or_else(|| Error::InvalidBody("inertia matrix is singular".into()))?;
        Ok(Self {
            mass,
            gravity,
            inertia,
            inertia_d: Mat3::identity() * (0.5 * inertia.trace()) - inertia,
            rho,
            inertia_inv,
        })
    }

    /// Diagonal inertia with standard gravity.
    pub fn diagonal(mass: f64, principal: [f64; 3], rho: Vec3) -> Result<Self, Error> {
        Self::new(mass, STANDARD_GRAVITY, Matrix3::from_diagonal(&Vec3::from(principal)), rho)
    }

    pub fn with_gravity(mut self, gravity: f64) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    /// `m g`, the weight.
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteState {
    pub r: RotationMatrix,
    /// Body-frame angular momentum `J Omega`.
    pub pi: Vec3,
}

impl DiscreteState {
    pub fn new(r: RotationMatrix, pi: Vec3) -> Self {
        Self { r, pi }
    }

    pub fn hanging() -> Self {
        Self { r: RotationMatrix::identity(), pi: Vec3::zeros() }
    }
}

/// A discrete trajectory `(R_k, Pi_k)`, `k = 0..=N`, with `controls[k]`
/// holding `u_{k+1}`, the input applied on the step `k -> k+1`.
#[derive(Clone, Debug)]
pub struct StateTrajectory {
    pub h: f64,
    pub states: Vec<DiscreteState>,
    pub controls: Vec<Vec3>,
}

impl StateTrajectory {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn last(&self) -> &DiscreteState {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Iteration limits for the implicit parts of the discrete flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImplicitOptions {
    /// Absolute residual target for the relative-attitude Newton solve,
    /// scaled by `max(1, h ||Pi||)`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Residual target for the multiplier fixed point, scaled by `max(1, ||lambda||)`.
    pub fixed_point_tol: f64,
    pub max_fixed_point: usize,
}

impl Default for ImplicitOptions {
    fn default() -> Self {
        Self { newton_tol: 1e-14, max_newton: 50, fixed_point_tol: 1e-14, max_fixed_point: 50 }
    }
}

/// Residual acceptance bound: a solve that stalls above `newton_tol` but below
/// this bound is still accepted.
const NEWTON_ACCEPT: f64 = 1e-13;

/// Solution of the implicit step equation.
#[derive(Clone, Copy, Debug)]
pub struct RelativeAttitude {
    pub f: RotationMatrix,
    /// Rotation vector with `f == exp_so3(log)`.
    pub log: Vec3,
    /// Newton updates performed.
    pub iterations: usize,
    pub residual: f64,
}

/// `h Pi - vee(F J_d - J_d F^T)`.
pub fn step_residual(pi: &Vec3, f: &RotationMatrix, body: &BodyParams, h: f64) -> Vec3 {
    let fj = f.matrix() * body.inertia_d;
    h * pi - 2.0 * vee_skew_part(&fj)
}

/// `tr(F J_d) I - F J_d`, the matrix mapping `F xi` to the variation of
/// `vee(F J_d - J_d F^T)`.
pub fn variation_matrix(f: &RotationMatrix, body: &BodyParams) -> Mat3 {
    let fj = f.matrix() * body.inertia_d;
    Mat3::identity() * fj.trace() - fj
}

pub fn solve_relative_attitude(pi: &Vec3, body: &BodyParams, h: f64) -> Result<RelativeAttitude, Error> {
    solve_relative_attitude_with(pi, body, h, &ImplicitOptions::default())
}

/// Newton iteration in the Lie algebra for `F = exp(f)`, started from the
/// continuous-limit guess `f = h J^-1 Pi`.
pub fn solve_relative_attitude_with(
    pi: &Vec3,
    body: &BodyParams,
    h: f64,
    opts: &ImplicitOptions,
) -> Result<RelativeAttitude, Error> {
    if !(h > 0.0) {
        return Err(Error::InvalidProblem(format!("step size must be positive, got {h}")));
    }
    if !pi.iter().all(|x| x.is_finite()) {
        return Err(Error::NoConvergence { what: "relative attitude", iterations: 0, residual: f64::NAN });
    }
    let scale = (h * pi.norm()).max(1.0);
    let tol = opts.newton_tol * scale;
    let accept = NEWTON_ACCEPT * scale;

    let mut log = h * body.inertia_inv() * pi;
    let mut f = exp_so3(&log);
    let mut residual = step_residual(pi, &f, body, h);
    let mut norm = residual.norm();
    let mut iterations = 0;

    while norm > tol {
        if iterations == opts.max_newton {
            if norm <= accept {
                break;
            }
            return Err(Error::NoConvergence { what: "relative attitude", iterations, residual: norm });
        }
        let jac = variation_matrix(&f, body) * f.matrix() * right_jacobian(&log);
        let step = match jac.lu().solve(&residual) {
            Some(step) => step,
            None => {
                let fd = residual_jacobian_fd(pi, &log, body, h);
                fd.lu().solve(&residual).ok_or(Error::NoConvergence {
                    what: "relative attitude",
                    iterations,
                    residual: norm,
                })?
            }
        };
        let next_log = log + step;
        let next_f = exp_so3(&next_log);
        let next_residual = step_residual(pi, &next_f, body, h);
        let next_norm = next_residual.norm();
        iterations += 1;

        if !next_norm.is_finite() || (next_norm >= norm && norm <= accept) {
            // roundoff floor reached
            break;
        }
        log = next_log;
        f = next_f;
        residual = next_residual;
        norm = next_norm;
    }
    if norm > accept {
        return Err(Error::NoConvergence { what: "relative attitude", iterations, residual: norm });
    }
    Ok(RelativeAttitude { f, log, iterations, residual: norm })
}

/// Central-difference Jacobian of `f -> vee(exp(f) J_d - J_d exp(f)^T)`.
fn residual_jacobian_fd(pi: &Vec3, log: &Vec3, body: &BodyParams, h: f64) -> Mat3 {
    let eps = 1e-7;
    let mut jac = Mat3::zeros();
    for j in 0..3 {
        let mut d = Vec3::zeros();
        d[j] = eps;
        let plus = step_residual(pi, &exp_so3(&(log + d)), body, h);
        let minus = step_residual(pi, &exp_so3(&(log - d)), body, h);
        jac.set_column(j, &((minus - plus) / (2.0 * eps)));
    }
    jac
}

/// Momentum update given the relative attitude and the applied control.
pub(crate) fn advance(
    state: &DiscreteState,
    f: &RotationMatrix,
    u_next: &Vec3,
    body: &BodyParams,
    h: f64,
) -> DiscreteState {
    let r = &state.r * f;
    let gamma = r.gravity_in_body();
    let pi = f.matrix().transpose() * state.pi + h * body.weight() * body.rho.cross(&gamma) + h * gamma.cross(u_next);
    DiscreteState { r, pi }
}

pub fn lgvi_step(state: &DiscreteState, u_next: &Vec3, body: &BodyParams, h: f64) -> Result<DiscreteState, Error> {
    let rel = solve_relative_attitude(&state.pi, body, h)?;
    Ok(advance(state, &rel.f, u_next, body, h))
}

pub fn integrate(
    initial: &DiscreteState,
    controls: &[Vec3],
    body: &BodyParams,
    h: f64,
) -> Result<StateTrajectory, Error> {
    integrate_with(initial, controls, body, h, &ImplicitOptions::default())
}

pub fn integrate_with(
    initial: &DiscreteState,
    controls: &[Vec3],
    body: &BodyParams,
    h: f64,
    opts: &ImplicitOptions,
) -> Result<StateTrajectory, Error> {
    if let Some(k) = controls.iter().position(|u| !u.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidProblem(format!("non-finite control at step {k}")));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*initial);
    let mut current = *initial;
    for (k, u) in controls.iter().enumerate() {
        let rel = solve_relative_attitude_with(&current.pi, body, h, opts).map_err(|e| e.at_step(k))?;
        current = advance(&current, &rel.f, u, body, h);
        states.push(current);
    }
    Ok(StateTrajectory { h, states, controls: controls.to_vec() })
}

/// Total energy `1/2 Pi^T J^-1 Pi - m g e3^T R rho`.
pub fn energy(state: &DiscreteState, body: &BodyParams) -> f64 {
    let omega = body.inertia_inv() * state.pi;
    0.5 * omega.dot(&state.pi) - body.weight() * e3().dot(&(state.r * body.rho))
}

/// Vertical inertial angular momentum `e3^T R Pi`, the momentum map of the
/// rotation symmetry about gravity.
pub fn momentum_pi3(state: &DiscreteState) -> f64 {
    state.r.gravity_in_body().dot(&state.pi)
}

/// Right-hand side of the continuous equations with moment `R^T e3 x u`:
/// returns `(R S(Omega), -Omega x Pi + m g rho x R^T e3 + R^T e3 x u)`.
pub fn continuous_rhs(state: &DiscreteState, u: &Vec3, body: &BodyParams) -> (Mat3, Vec3) {
    let omega = body.inertia_inv() * state.pi;
    let gamma = state.r.gravity_in_body();
    let r_dot = state.r.matrix() * hat(&omega);
    let pi_dot = -omega.cross(&state.pi) + body.weight() * body.rho.cross(&gamma) + gamma.cross(u);
    (r_dot, pi_dot)
}
