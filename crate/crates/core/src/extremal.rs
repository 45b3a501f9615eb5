//! Forward propagation of the discrete optimality system.
//!
//! Given `(R_0, Pi_0, lambda_0)`, each step solves for `F_k`, applies the
//! control law `u_{k+1} = R_{k+1}^T e3 x lambda2_k`, advances the state, and
//! then recovers the next multiplier from the implicit recursion
//!
//! ```text
//! [lambda1_k]   [A_{k+1}^T  C_{k+1}^T - h F_{k+1} u_{k+2} e3^T R_{k+2}    ] [lambda1_{k+1}]
//! [lambda2_k] = [B_{k+1}^T  D_{k+1}^T - h B_{k+1}^T u_{k+2} e3^T R_{k+2}  ] [lambda2_{k+1}]
//! ```
//!
//! where `u_{k+2}` itself depends on `lambda2_{k+1}`; that dependence is
//! resolved by fixed-point iteration.

use nalgebra::{Matrix6, Vector6};

use crate::dynamics::{
    advance, solve_relative_attitude_with, BodyParams, DiscreteState, ImplicitOptions, StateTrajectory,
};
use crate::error::Error;
use crate::so3::{hat, Mat3, RotationMatrix, Vec3};

/// Largest condition number accepted for `tr(F J_d) I - F J_d`.
pub const MAX_VARIATION_COND: f64 = 1e12;

/// Multipliers attached to the kinematic (`lambda1`) and momentum (`lambda2`)
/// equations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Costate {
    pub lambda1: Vec3,
    pub lambda2: Vec3,
}

impl Costate {
    pub fn new(lambda1: Vec3, lambda2: Vec3) -> Self {
        Self { lambda1, lambda2 }
    }

    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.lambda1[0],
            self.lambda1[1],
            self.lambda1[2],
            self.lambda2[0],
            self.lambda2[1],
            self.lambda2[2],
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self { lambda1: v.fixed_rows::<3>(0).into_owned(), lambda2: v.fixed_rows::<3>(3).into_owned() }
    }

    pub fn is_finite(&self) -> bool {
        self.lambda1.iter().chain(self.lambda2.iter()).all(|x| x.is_finite())
    }
}

/// Linearization blocks of one discrete step without the control term:
/// `zeta_{k+1} = A zeta_k + B dPi_k`, `dPi_{k+1} = C zeta_k + D dPi_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationBlocks {
    pub a: Mat3,
    pub b: Mat3,
    pub c: Mat3,
    pub d: Mat3,
    /// `(tr(F J_d) I - F J_d)^-1`, kept for the sensitivity derivation.
    pub(crate) e_inv: Mat3,
}

/// `u_{k+1} = R_{k+1}^T e3 x lambda2_k`.
pub fn control_from_costate(r_next: &RotationMatrix, lambda2: &Vec3) -> Vec3 {
    r_next.gravity_in_body().cross(lambda2)
}

pub fn variation_blocks(
    f: &RotationMatrix,
    pi: &Vec3,
    r_next: &RotationMatrix,
    body: &BodyParams,
    h: f64,
) -> Result<VariationBlocks, Error> {
    let e = crate::dynamics::variation_matrix(f, body);
    let sv = e.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_VARIATION_COND) {
        return Err(Error::SingularVariation { cond });
    }
    let e_inv = e.try_inverse().ok_or(Error::SingularVariation { cond: f64::INFINITY })?;
    let ft = f.matrix().transpose();
    let b = h * ft * e_inv;
    let gravity = h * body.weight() * hat(&body.rho) * hat(&r_next.gravity_in_body());
    Ok(VariationBlocks { a: ft, b, c: gravity * ft, d: ft + hat(&(ft * pi)) * b + gravity * b, e_inv })
}

/// The 6x6 coefficient matrix of the multiplier recursion at step `j`, for a
/// given control `u_{j+1}` and body-frame gravity `Gamma_{j+1}`.
pub fn costate_matrix(
    blocks: &VariationBlocks,
    f: &RotationMatrix,
    gamma_next: &Vec3,
    u_next: &Vec3,
    h: f64,
) -> Matrix6<f64> {
    let ug = u_next * gamma_next.transpose();
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&blocks.a.transpose());
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(blocks.c.transpose() - h * f.matrix() * ug));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&blocks.b.transpose());
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(blocks.d.transpose() - h * blocks.b.transpose() * ug));
    m
}

/// State data at step `j` that the recursion for `lambda_j` needs. None of it
/// depends on `lambda_j`.
#[derive(Clone, Copy, Debug)]
pub struct CostateContext<'a> {
    pub f: &'a RotationMatrix,
    /// `R_{j+1}`.
    pub r_next: &'a RotationMatrix,
    pub blocks: &'a VariationBlocks,
}

impl CostateContext<'_> {
    /// `Phi^T lambda - lambda_prev` evaluated self-consistently.
    pub fn residual(&self, lambda: &Costate, lambda_prev: &Costate, h: f64) -> Vector6<f64> {
        self.apply(lambda, h) - lambda_prev.to_vector()
    }

    fn apply(&self, lambda: &Costate, h: f64) -> Vector6<f64> {
        let gamma = self.r_next.gravity_in_body();
        let u = control_from_costate(self.r_next, &lambda.lambda2);
        costate_matrix(self.blocks, self.f, &gamma, &u, h) * lambda.to_vector()
    }
}

/// Outcome of one multiplier solve.
#[derive(Clone, Copy, Debug)]
pub struct CostateSolve {
    pub lambda: Costate,
    pub sweeps: usize,
    pub residual: f64,
}

pub fn costate_step(lambda_prev: &Costate, ctx: &CostateContext<'_>, h: f64) -> Result<CostateSolve, Error> {
    costate_step_with(lambda_prev, ctx, h, &ImplicitOptions::default())
}

/// Solves the multiplier recursion for `lambda_j` given `lambda_{j-1}`.
///
/// Fixed-point sweeps freeze `u_{j+1}` at the current guess and solve the
/// resulting linear system. If a sweep fails to shrink the update by at least
/// 10%, the remaining work is handed to Newton with a finite-difference
/// Jacobian.
pub fn costate_step_with(
    lambda_prev: &Costate,
    ctx: &CostateContext<'_>,
    h: f64,
    opts: &ImplicitOptions,
) -> Result<CostateSolve, Error> {
    let target = lambda_prev.to_vector();
    let gamma = ctx.r_next.gravity_in_body();
    let tol = opts.fixed_point_tol * target.norm().max(1.0);

    let mut lambda = *lambda_prev;
    let mut last_update = f64::INFINITY;
    for sweep in 1..=opts.max_fixed_point {
        let u = control_from_costate(ctx.r_next, &lambda.lambda2);
        let m = costate_matrix(ctx.blocks, ctx.f, &gamma, &u, h);
        let next = m.lu().solve(&target).ok_or(Error::SingularVariation { cond: f64::INFINITY })?;
        let update = (next - lambda.to_vector()).norm();
        lambda = Costate::from_vector(&next);
        if !lambda.is_finite() {
            break;
        }
        if update <= tol {
            let residual = ctx.residual(&lambda, lambda_prev, h).norm();
            return Ok(CostateSolve { lambda, sweeps: sweep, residual });
        }
        if update > 0.9 * last_update {
            return costate_newton(lambda, lambda_prev, ctx, h, opts, sweep);
        }
        last_update = update;
    }
    let residual = ctx.residual(&lambda, lambda_prev, h).norm();
    Err(Error::NoConvergence { what: "multiplier recursion", iterations: opts.max_fixed_point, residual })
}

fn costate_newton(
    start: Costate,
    lambda_prev: &Costate,
    ctx: &CostateContext<'_>,
    h: f64,
    opts: &ImplicitOptions,
    sweeps: usize,
) -> Result<CostateSolve, Error> {
    let tol = opts.fixed_point_tol * lambda_prev.to_vector().norm().max(1.0);
    let mut x = start.to_vector();
    let mut residual = ctx.residual(&start, lambda_prev, h);
    for it in 1..=opts.max_fixed_point {
        let mut jac = Matrix6::zeros();
        for j in 0..6 {
            let eps = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[j] += eps;
            xm[j] -= eps;
            let col = (ctx.residual(&Costate::from_vector(&xp), lambda_prev, h)
                - ctx.residual(&Costate::from_vector(&xm), lambda_prev, h))
                / (2.0 * eps);
            jac.set_column(j, &col);
        }
        let step = jac.lu().solve(&residual).ok_or(Error::SingularVariation { cond: f64::INFINITY })?;
        x -= step;
        residual = ctx.residual(&Costate::from_vector(&x), lambda_prev, h);
        if step.norm() <= tol {
            return Ok(CostateSolve {
                lambda: Costate::from_vector(&x),
                sweeps: sweeps + it,
                residual: residual.norm(),
            });
        }
    }
    Err(Error::NoConvergence {
        what: "multiplier recursion",
        iterations: sweeps + opts.max_fixed_point,
        residual: residual.norm(),
    })
}

/// A trajectory satisfying the discrete optimality system.
///
/// Index conventions, for `k = 0..N-1`: `relative[k] = F_k`,
/// `blocks[k]` built from `(F_k, Pi_k, R_{k+1})`, `costates[k] = lambda_k`,
/// and `trajectory.controls[k] = u_{k+1}`.
#[derive(Clone, Debug)]
pub struct ExtremalTrajectory {
    pub body: BodyParams,
    pub trajectory: StateTrajectory,
    pub relative: Vec<RotationMatrix>,
    pub blocks: Vec<VariationBlocks>,
    pub costates: Vec<Costate>,
    /// `sum h/2 ||u_{k+1}||^2`.
    pub cost: f64,
    pub max_newton_iterations: usize,
    pub max_fixed_point_sweeps: usize,
}

impl ExtremalTrajectory {
    pub fn steps(&self) -> usize {
        self.relative.len()
    }

    pub fn h(&self) -> f64 {
        self.trajectory.h
    }

    pub fn terminal(&self) -> &DiscreteState {
        self.trajectory.last()
    }

    pub fn controls(&self) -> &[Vec3] {
        &self.trajectory.controls
    }

    pub fn states(&self) -> &[DiscreteState] {
        &self.trajectory.states
    }

    /// Recursion context for `lambda_j`, `1 <= j <= N-1`.
    pub fn context(&self, j: usize) -> CostateContext<'_> {
        CostateContext { f: &self.relative[j], r_next: &self.trajectory.states[j + 1].r, blocks: &self.blocks[j] }
    }
}

pub fn propagate_extremal(
    initial: &DiscreteState,
    lambda0: &Costate,
    steps: usize,
    body: &BodyParams,
    h: f64,
) -> Result<ExtremalTrajectory, Error> {
    propagate_extremal_with(initial, lambda0, steps, body, h, &ImplicitOptions::default())
}

pub fn propagate_extremal_with(
    initial: &DiscreteState,
    lambda0: &Costate,
    steps: usize,
    body: &BodyParams,
    h: f64,
    opts: &ImplicitOptions,
) -> Result<ExtremalTrajectory, Error> {
    if steps < 2 {
        return Err(Error::InvalidProblem(format!("horizon must have at least 2 steps, got {steps}")));
    }
    if !lambda0.is_finite() {
        return Err(Error::InvalidProblem("non-finite initial multiplier".into()));
    }

    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut relative = Vec::with_capacity(steps);
    let mut blocks = Vec::with_capacity(steps);
    let mut costates = Vec::with_capacity(steps);
    let mut max_newton = 0;
    let mut max_sweeps = 0;
    let mut cost = 0.0;

    states.push(*initial);
    costates.push(*lambda0);
    let first = solve_relative_attitude_with(&initial.pi, body, h, opts).map_err(|e| e.at_step(0))?;
    max_newton = max_newton.max(first.iterations);
    relative.push(first.f);

    for k in 0..steps {
        let state = states[k];
        let f = relative[k];
        let lambda = costates[k];

        let r_next = state.r * f;
        let u = control_from_costate(&r_next, &lambda.lambda2);
        let next = advance(&state, &f, &u, body, h);
        blocks.push(variation_blocks(&f, &state.pi, &next.r, body, h).map_err(|e| e.at_step(k))?);
        cost += 0.5 * h * u.norm_squared();
        controls.push(u);
        states.push(next);

        let j = k + 1;
        if j < steps {
            let rel = solve_relative_attitude_with(&next.pi, body, h, opts).map_err(|e| e.at_step(j))?;
            max_newton = max_newton.max(rel.iterations);
            let r_after = next.r * rel.f;
            let blocks_j = variation_blocks(&rel.f, &next.pi, &r_after, body, h).map_err(|e| e.at_step(j))?;
            let ctx = CostateContext { f: &rel.f, r_next: &r_after, blocks: &blocks_j };
            let solved = costate_step_with(&lambda, &ctx, h, opts).map_err(|e| e.at_step(j))?;
            max_sweeps = max_sweeps.max(solved.sweeps);
            relative.push(rel.f);
            costates.push(solved.lambda);
        }
    }

    Ok(ExtremalTrajectory {
        body: body.clone(),
        trajectory: StateTrajectory { h, states, controls },
        relative,
        blocks,
        costates,
        cost,
        max_newton_iterations: max_newton,
        max_fixed_point_sweeps: max_sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, momentum_pi3, solve_relative_attitude};
    use crate::so3::{e3, exp_so3};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn body_a() -> BodyParams {
        BodyParams::diagonal(1.0, [0.13, 0.28, 0.17], Vec3::new(0.0, 0.0, 0.3)).unwrap()
    }

    fn tilted() -> DiscreteState {
        DiscreteState::new(exp_so3(&Vec3::new(0.5, -0.3, 0.8)), Vec3::new(0.05, -0.1, 0.02))
    }

    #[test]
    fn control_law_examples() {
        let id = RotationMatrix::identity();
        assert_eq!(control_from_costate(&id, &Vec3::new(0.0, 0.0, 5.0)), Vec3::zeros());
        assert_eq!(control_from_costate(&id, &Vec3::x()), Vec3::y());
    }

    #[test]
    fn blocks_at_identity() {
        let body = body_a();
        let id = RotationMatrix::identity();
        let blocks = variation_blocks(&id, &Vec3::zeros(), &id, &body, 0.01).unwrap();
        assert_eq!(blocks.a, Mat3::identity());
        // tr(J_d) = 0.29, so tr(J_d) I - J_d = diag(0.13, 0.28, 0.17) = J
        let expected = Mat3::from_diagonal(&Vec3::new(0.01 / 0.13, 0.01 / 0.28, 0.01 / 0.17));
        assert_relative_eq!(blocks.b, expected, epsilon = 1e-15);
    }

    #[test]
    fn blocks_without_gravity_arm() {
        let body = BodyParams::diagonal(1.0, [0.13, 0.28, 0.17], Vec3::zeros()).unwrap();
        let f = exp_so3(&Vec3::new(0.01, 0.02, -0.005));
        let pi = Vec3::new(0.3, 0.1, -0.2);
        let r_next = exp_so3(&Vec3::new(1.0, 0.2, 0.0));
        let blocks = variation_blocks(&f, &pi, &r_next, &body, 0.01).unwrap();
        assert_eq!(blocks.c, Mat3::zeros());
        let ft = f.matrix().transpose();
        assert_relative_eq!(blocks.d, ft + hat(&(ft * pi)) * blocks.b, epsilon = 1e-16);
    }

    #[test]
    fn b_block_matches_finite_difference_of_implicit_solve() {
        let body = body_a();
        let h = 0.01;
        for pi in [Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.4, -0.3, 0.9), Vec3::new(-1.0, 0.5, 0.2)] {
            let f = solve_relative_attitude(&pi, &body, h).unwrap().f;
            let blocks = variation_blocks(&f, &pi, &f, &body, h).unwrap();
            let eps = 1e-6;
            let mut fd = Mat3::zeros();
            for j in 0..3 {
                let mut d = Vec3::zeros();
                d[j] = eps;
                let fp = solve_relative_attitude(&(pi + d), &body, h).unwrap().f;
                let fm = solve_relative_attitude(&(pi - d), &body, h).unwrap().f;
                // xi such that F(pi + d) = F(pi) exp(xi)
                let xp = crate::so3::log_so3(&(f.transpose() * fp));
                let xm = crate::so3::log_so3(&(f.transpose() * fm));
                fd.set_column(j, &((xp - xm) / (2.0 * eps)));
            }
            let rel = (blocks.b - fd).norm() / fd.norm();
            assert!(rel <= 1e-6, "{rel}");
        }
    }

    #[test]
    fn singular_variation_is_rejected() {
        let body = BodyParams::diagonal(1.0, [0.2, 0.2, 0.2], Vec3::zeros()).unwrap();
        // J_d = 0.1 I; F = pi about x gives F J_d = diag(0.1, -0.1, -0.1), tr = -0.1,
        // tr I - F J_d = diag(-0.2, 0.0, 0.0).
        let f = exp_so3(&Vec3::new(std::f64::consts::PI, 0.0, 0.0));
        let err = variation_blocks(&f, &Vec3::zeros(), &f, &body, 0.01).unwrap_err();
        assert!(matches!(err, Error::SingularVariation { .. }));
    }

    #[test]
    fn zero_costate_is_a_fixed_point() {
        let body = body_a();
        let ext = propagate_extremal(&tilted(), &Costate::zeros(), 5, &body, 0.01).unwrap();
        let solved = costate_step(&Costate::zeros(), &ext.context(1), 0.01).unwrap();
        assert_eq!(solved.lambda.to_vector().norm(), 0.0);
    }

    #[test]
    fn zero_costate_reduces_to_free_flow() {
        let body = body_a();
        let ext = propagate_extremal(&tilted(), &Costate::zeros(), 40, &body, 0.01).unwrap();
        let free = integrate(&tilted(), &vec![Vec3::zeros(); 40], &body, 0.01).unwrap();
        assert_eq!(ext.cost, 0.0);
        assert!(ext.controls().iter().all(|u| *u == Vec3::zeros()));
        for (a, b) in ext.states().iter().zip(&free.states) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_short_horizon() {
        assert!(propagate_extremal(&tilted(), &Costate::zeros(), 1, &body_a(), 0.01).is_err());
    }

    #[test]
    fn fixed_point_sweeps_are_few() {
        let body = body_a();
        let lambda0 = Costate::new(Vec3::new(0.3, -0.8, 0.5), Vec3::new(-0.6, 0.9, 0.1));
        let ext = propagate_extremal(&DiscreteState::hanging(), &lambda0, 100, &body, 0.01).unwrap();
        assert!(ext.max_fixed_point_sweeps <= 4, "{}", ext.max_fixed_point_sweeps);
        assert!(ext.max_newton_iterations <= 4, "{}", ext.max_newton_iterations);
    }

    fn costate() -> impl Strategy<Value = Costate> {
        proptest::collection::vec(-2.0..2.0f64, 6).prop_map(|v| Costate::from_vector(&Vector6::from_column_slice(&v)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn extremal_invariants(lambda0 in costate()) {
            let body = body_a();
            let h = 0.01;
            let ext = propagate_extremal(&tilted(), &lambda0, 60, &body, h).unwrap();
            let pi3 = momentum_pi3(&ext.states()[0]);
            for (k, state) in ext.states().iter().enumerate() {
                prop_assert!((momentum_pi3(state) - pi3).abs() <= 1e-12, "step {}", k);
            }
            let mut cost = 0.0;
            for k in 0..ext.steps() {
                let r_next = &ext.states()[k + 1].r;
                let u = ext.controls()[k];
                prop_assert_eq!(u, control_from_costate(r_next, &ext.costates[k].lambda2));
                prop_assert!(u.dot(&(r_next.matrix().transpose() * e3())).abs() <= 1e-15);
                cost += 0.5 * h * u.norm_squared();
            }
            prop_assert!((cost - ext.cost).abs() <= 1e-14 * cost.max(1.0));
            for j in 1..ext.steps() {
                let res = ext.context(j).residual(&ext.costates[j], &ext.costates[j - 1], h).norm();
                prop_assert!(res <= 1e-12, "j = {}: {}", j, res);
            }
        }
    }
}
