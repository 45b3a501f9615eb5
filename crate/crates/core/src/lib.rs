//! Geometrically exact simulation and optimal control of the 3D pendulum.
//!
//! The attitude lives on SO(3) and is propagated with a Lie group variational
//! integrator that preserves the group structure and the vertical angular
//! momentum exactly. Minimum-effort maneuvers are found by shooting on the
//! initial multiplier of the discrete optimality conditions, with a
//! sensitivity reduction that removes the rank deficiency the rotation
//! symmetry about gravity introduces.
//!
//! ```
//! use pendulum_core::cases::CaseId;
//! use pendulum_core::dynamics::{integrate, momentum_pi3, DiscreteState};
//! use pendulum_core::so3::{exp_so3, Vec3};
//!
//! let body = CaseId::I.body();
//! let start = DiscreteState::new(exp_so3(&Vec3::new(0.5, 0.0, 0.0)), Vec3::new(0.0, 0.1, 0.2));
//! let traj = integrate(&start, &vec![Vec3::zeros(); 100], &body, 0.01).unwrap();
//! assert!((momentum_pi3(traj.last()) - momentum_pi3(&start)).abs() < 1e-13);
//! ```

// NaN must fail validation, hence `!(x <= tol)` over `x > tol`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod dynamics;
pub mod error;
pub mod extremal;
pub mod phase;
pub mod sensitivity;
pub mod shooting;
pub mod so3;

pub use dynamics::{BodyParams, DiscreteState, StateTrajectory};
pub use error::Error;
pub use extremal::{Costate, ExtremalTrajectory};
pub use shooting::{ProblemSpec, Solution, SolverConfig};
pub use so3::{Mat3, RotationMatrix, Vec3};
