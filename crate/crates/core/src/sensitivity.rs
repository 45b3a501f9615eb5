//! First-order sensitivity of the terminal state to the initial multiplier.
//!
//! Perturbations are expressed in the Lie algebra: `x_k = [zeta_k; dPi_k]`
//! with `dR_k = R_k S(zeta_k)`. With the control eliminated through the
//! control law, the linearized state and multiplier equations read
//!
//! ```text
//! x_{k+1}     = A11_k x_k + A12_k dlambda_k
//! dlambda_{k} = A21_{k+1} x_{k+1} + A11_{k+1}^T dlambda_{k+1}
//! ```
//!
//! and are swept forward from `x_0 = 0`, `dlambda_0 = I` to obtain the map
//! `x_N = Psi12 dlambda_0`.
//!
//! Because the vertical inertial momentum is conserved for every multiplier,
//! `Psi12` is rank deficient by one. [`symmetry_transform`] re-expresses the
//! momentum rows in the inertial frame so the deficiency is isolated in the
//! last row, which is then dropped before the minimum-norm update.

use nalgebra::{Matrix6, SMatrix, Vector5, Vector6};

use crate::dynamics::{DiscreteState, ImplicitOptions};
use crate::error::Error;
use crate::extremal::{propagate_extremal_with, Costate, ExtremalTrajectory};
use crate::shooting::ProblemSpec;
use crate::so3::{e3, hat, log_so3, Mat3, Vec3};

pub type Matrix5x6 = SMatrix<f64, 5, 6>;

/// Largest condition number of `Xi Xi^T` accepted by [`reduce_and_pinv`].
pub const MAX_NORMAL_COND: f64 = 1e12;

/// A perturbation `x = [zeta; dPi]` of a discrete state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PerturbationState {
    pub zeta: Vec3,
    pub d_pi: Vec3,
}

impl PerturbationState {
    /// Lie-algebra difference `perturbed - reference`.
    pub fn between(reference: &DiscreteState, perturbed: &DiscreteState) -> Self {
        Self { zeta: log_so3(&(reference.r.transpose() * perturbed.r)), d_pi: perturbed.pi - reference.pi }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.zeta[0], self.zeta[1], self.zeta[2], self.d_pi[0], self.d_pi[1], self.d_pi[2])
    }
}

/// Linearization of one step of the extremal flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLinearization {
    /// `d x_{k+1} / d x_k`.
    pub a11: Matrix6<f64>,
    /// `d x_{k+1} / d lambda_k`.
    pub a12: Matrix6<f64>,
    /// `d lambda_{k-1} / d x_k` in the multiplier recursion at fixed `lambda_k`.
    pub a21: Matrix6<f64>,
}

fn put(m: &mut Matrix6<f64>, row: usize, col: usize, block: &Mat3) {
    m.fixed_view_mut::<3, 3>(row, col).copy_from(block);
}

fn block(m: &Matrix6<f64>, row: usize, col: usize) -> Mat3 {
    m.fixed_view::<3, 3>(row, col).into_owned()
}

/// Blocks of the linearized extremal flow at step `k`, `0 <= k < N`.
pub fn linearized_step_blocks(ext: &ExtremalTrajectory, k: usize) -> StepLinearization {
    let body = &ext.body;
    let h = ext.h();
    let f = ext.relative[k].matrix();
    let ft = f.transpose();
    let blocks = &ext.blocks[k];
    let b = blocks.b;
    let pi = ext.states()[k].pi;
    let gamma = ext.states()[k + 1].r.gravity_in_body();
    let lambda = ext.costates[k];
    let (l1, l2) = (lambda.lambda1, lambda.lambda2);
    let s_gamma = hat(&gamma);
    let mg = body.weight();

    // State: u_{k+1} = Gamma x lambda2, so Gamma x u = (Gamma Gamma^T - I) lambda2 and
    // its variation through dGamma = S(Gamma) zeta_{k+1} is G S(Gamma) zeta_{k+1}.
    let g = Mat3::identity() * gamma.dot(&l2) + gamma * l2.transpose();
    let control_gain = h * g * s_gamma;
    let mut a11 = Matrix6::zeros();
    put(&mut a11, 0, 0, &ft);
    put(&mut a11, 0, 3, &b);
    put(&mut a11, 3, 0, &(blocks.c + control_gain * ft));
    put(&mut a11, 3, 3, &(blocks.d + control_gain * b));

    let mut a12 = Matrix6::zeros();
    put(&mut a12, 3, 3, &(h * (gamma * gamma.transpose() - Mat3::identity())));

    // Multiplier recursion lambda_{k-1} = [F v; B^T (v - S(F^T Pi) lambda2) + F lambda2] with
    // v = lambda1 + h m g S(Gamma) S(rho) lambda2 - h w, w = (Gamma x lambda2)(Gamma . lambda2).
    // The state enters through xi = B dPi (dF = F S(xi)), eta = zeta_{k+1} = F^T zeta + xi
    // (dGamma = S(Gamma) eta) and dPi directly.
    let u = gamma.cross(&l2);
    let w = u * gamma.dot(&l2);
    let v = l1 + h * mg * s_gamma * hat(&body.rho) * l2 - h * w;
    let ftpi = ft * pi;
    let y = v - hat(&ftpi) * l2;

    let dw = -gamma.dot(&l2) * hat(&l2) + u * l2.transpose();
    let wv = (-h * mg * hat(&body.rho.cross(&l2)) - h * dw) * s_gamma;

    let e_inv_t = blocks.e_inv.transpose();
    let z = e_inv_t * f * y;
    let jd_f = body.inertia_d * f;
    let t = -(jd_f - jd_f.transpose());
    let t = Vec3::new(t[(2, 1)], t[(0, 2)], t[(1, 0)]);

    let top_xi = -f * hat(&v);
    let top_eta = f * wv;
    let bot_xi = -h * e_inv_t * f * hat(&y) - h * e_inv_t * (z * t.transpose() - body.inertia_d * hat(&(ft * z)))
        + b.transpose() * hat(&l2) * hat(&ftpi)
        - f * hat(&l2);
    let bot_eta = b.transpose() * wv;
    let bot_dpi = b.transpose() * hat(&l2) * ft;

    let mut a21 = Matrix6::zeros();
    put(&mut a21, 0, 0, &(top_eta * ft));
    put(&mut a21, 0, 3, &((top_xi + top_eta) * b));
    put(&mut a21, 3, 0, &(bot_eta * ft));
    put(&mut a21, 3, 3, &((bot_xi + bot_eta) * b + bot_dpi));

    StepLinearization { a11, a12, a21 }
}

/// The sensitivity `Psi12 = d x_N / d lambda_0` at fixed initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub psi12: Matrix6<f64>,
}

impl TransitionMatrix {
    pub fn apply(&self, d_lambda0: &Vector6<f64>) -> Vector6<f64> {
        self.psi12 * d_lambda0
    }
}

pub fn accumulate_transition(ext: &ExtremalTrajectory) -> Result<TransitionMatrix, Error> {
    let n = ext.steps();
    let mut x = Matrix6::<f64>::zeros();
    let mut dl = Matrix6::<f64>::identity();
    let mut step = linearized_step_blocks(ext, 0);
    for k in 0..n {
        x = step.a11 * x + step.a12 * dl;
        if k + 1 < n {
            step = linearized_step_blocks(ext, k + 1);
            let rhs = dl - step.a21 * x;
            dl = step
                .a11
                .transpose()
                .lu()
                .solve(&rhs)
                .ok_or(Error::SingularVariation { cond: f64::INFINITY })
                .map_err(|e| e.at_step(k + 1))?;
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularVariation { cond: f64::INFINITY });
    }
    Ok(TransitionMatrix { psi12: x })
}

/// Central-difference estimate of `Psi12`, perturbing each multiplier
/// component by `+-eps` and re-propagating the full nonlinear extremal.
pub fn transition_fd(
    initial: &DiscreteState,
    lambda0: &Costate,
    reference: &ExtremalTrajectory,
    eps: f64,
    opts: &ImplicitOptions,
) -> Result<TransitionMatrix, Error> {
    let n = reference.steps();
    let base = reference.terminal();
    let mut psi12 = Matrix6::zeros();
    for j in 0..6 {
        let mut plus = lambda0.to_vector();
        let mut minus = plus;
        plus[j] += eps;
        minus[j] -= eps;
        let ext_p =
            propagate_extremal_with(initial, &Costate::from_vector(&plus), n, &reference.body, reference.h(), opts)?;
        let ext_m =
            propagate_extremal_with(initial, &Costate::from_vector(&minus), n, &reference.body, reference.h(), opts)?;
        let xp = PerturbationState::between(base, ext_p.terminal()).to_vector();
        let xm = PerturbationState::between(base, ext_m.terminal()).to_vector();
        psi12.set_column(j, &((xp - xm) / (2.0 * eps)));
    }
    Ok(TransitionMatrix { psi12 })
}

/// Rewrites the momentum rows of `Psi12` as variations of the inertial
/// momentum `R_N Pi_N`: rows 4..6 become `R_N (Psi3 - S(Pi_N) Psi1)` and
/// `R_N (Psi4 - S(Pi_N) Psi2)`.
pub fn symmetry_transform(psi12: &Matrix6<f64>, terminal: &DiscreteState) -> Matrix6<f64> {
    let r = terminal.r.matrix();
    let s = hat(&terminal.pi);
    let mut out = *psi12;
    for col in [0, 3] {
        let p_att = block(psi12, 0, col);
        let p_mom = block(psi12, 3, col);
        put(&mut out, 3, col, &(r * (p_mom - s * p_att)));
    }
    out
}

/// The five retained rows of the transformed sensitivity and diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedSensitivity {
    pub xi: Matrix5x6,
    /// Norm of the dropped (vertical momentum) row.
    pub last_row_norm: f64,
    /// Condition number of `Xi` (ratio of extreme singular values).
    pub cond: f64,
}

impl ReducedSensitivity {
    pub fn from_transformed(transformed: &Matrix6<f64>) -> Self {
        let xi: Matrix5x6 = transformed.fixed_rows::<5>(0).into_owned();
        let last_row_norm = transformed.row(5).norm();
        let sv = xi.singular_values();
        let cond = sv.max() / sv.min();
        Self { xi, last_row_norm, cond }
    }
}

/// Minimum-norm multiplier update with its diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinvStep {
    pub delta: Vector6<f64>,
    pub cond: f64,
    pub last_row_norm: f64,
}

/// Solves `Xi dlambda = target` in the minimum-norm sense,
/// `dlambda = Xi^T (Xi Xi^T)^-1 target`, with `Xi` the first five rows of
/// `transformed`.
pub fn reduce_and_pinv(transformed: &Matrix6<f64>, target: &Vector5<f64>) -> Result<PinvStep, Error> {
    let reduced = ReducedSensitivity::from_transformed(transformed);
    let normal_cond = reduced.cond * reduced.cond;
    if !(normal_cond <= MAX_NORMAL_COND) {
        return Err(Error::IllConditioned { cond: normal_cond });
    }
    let normal = reduced.xi * reduced.xi.transpose();
    let chol = normal.cholesky().ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let delta = reduced.xi.transpose() * chol.solve(target);
    Ok(PinvStep { delta, cond: reduced.cond, last_row_norm: reduced.last_row_norm })
}

/// Plain Newton step on the untransformed 6x6 system, with its condition
/// number. Only used to demonstrate the ill-conditioning that the symmetry
/// reduction removes.
pub fn raw_newton_step(psi12: &Matrix6<f64>, target: &Vector6<f64>) -> (Vector6<f64>, f64) {
    let sv = psi12.singular_values();
    let cond = sv.max() / sv.min();
    let delta = psi12.lu().solve(target).unwrap_or_else(|| Vector6::repeat(f64::NAN));
    (delta, cond)
}

/// Terminal boundary-condition violation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalError {
    /// `[log(R_N^T R_N^d); first two components of R_N^d Pi_N^d - R_N Pi_N]`.
    pub reduced: Vector5<f64>,
    /// `[log(R_N^T R_N^d); Pi_N^d - Pi_N]`, the untransformed target.
    pub body_frame: Vector6<f64>,
    /// `||logm(R_N^d^T R_N)||`.
    pub attitude_norm: f64,
    /// `||Pi_N^d - Pi_N||`.
    pub momentum_norm: f64,
    /// Third component of `R_N^d Pi_N^d - R_N Pi_N`.
    pub vertical_gap: f64,
}

impl TerminalError {
    /// `||x'_N||`, the quantity the shooting iteration drives to zero.
    pub fn norm(&self) -> f64 {
        self.reduced.norm()
    }
}

pub fn terminal_error(terminal: &DiscreteState, problem: &ProblemSpec) -> TerminalError {
    let zeta = log_so3(&(terminal.r.transpose() * problem.target.r));
    let inertial = problem.target.r * problem.target.pi - terminal.r * terminal.pi;
    let d_pi = problem.target.pi - terminal.pi;
    TerminalError {
        reduced: Vector5::new(zeta[0], zeta[1], zeta[2], inertial[0], inertial[1]),
        body_frame: Vector6::new(zeta[0], zeta[1], zeta[2], d_pi[0], d_pi[1], d_pi[2]),
        attitude_norm: zeta.norm(),
        momentum_norm: d_pi.norm(),
        vertical_gap: e3().dot(&inertial),
    }
}
