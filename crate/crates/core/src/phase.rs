//! Geometric phase of a closed reduced trajectory.
//!
//! With zero vertical momentum, a loop of the body-frame gravity direction
//! `Gamma = R^T e3` on the unit sphere brings the attitude back to its
//! starting orbit rotated about the vertical by
//!
//! ```text
//! theta = integral over the enclosed region of
//!         (2 |J Gamma|^2 - tr(J) Gamma^T J Gamma) / (Gamma^T J Gamma)^2 dA
//! ```
//!
//! The region is fanned into spherical triangles from the loop's normalized
//! centroid; each triangle carries the sign of its orientation, so the fan
//! integrates correctly over non-convex loops. Counterclockwise loops seen
//! from outside the sphere enclose positive area.

use std::f64::consts::PI;

use crate::dynamics::StateTrajectory;
use crate::error::Error;
use crate::so3::{log_so3, Mat3, RotationMatrix, Vec3};

/// Closure tolerance `||Gamma_0 - Gamma_N||`.
pub const CLOSURE_TOL: f64 = 1e-8;
/// Loops enclosing less signed area than this are reported as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;
/// Per-triangle refinement threshold of the adaptive quadrature.
pub const QUADRATURE_TOL: f64 = 1e-6;
const MAX_DEPTH: u32 = 10;

/// Unit vectors `Gamma_k` on the sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTrajectory {
    points: Vec<Vec3>,
}

impl ReducedTrajectory {
    pub fn new(points: Vec<Vec3>) -> Result<Self, Error> {
        if let Some((k, p)) = points.iter().enumerate().find(|(_, p)| !((p.norm() - 1.0).abs() <= 1e-12)) {
            return Err(Error::InvalidProblem(format!("reduced point {k} is not a unit vector (norm {})", p.norm())));
        }
        Ok(Self { points })
    }

    pub fn from_trajectory(trajectory: &StateTrajectory) -> Self {
        Self { points: trajectory.states.iter().map(|s| s.r.gravity_in_body()).collect() }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// The same loop traversed backwards.
    pub fn reversed(&self) -> Self {
        Self { points: self.points.iter().rev().copied().collect() }
    }
}

/// Density of the geometric phase per unit area at `gamma`.
pub fn phase_integrand(gamma: &Vec3, inertia: &Mat3) -> f64 {
    let jg = inertia * gamma;
    let quad = gamma.dot(&jg);
    (2.0 * jg.norm_squared() - inertia.trace() * quad) / (quad * quad)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseEstimate {
    /// Phase wrapped to `(-pi, pi]`.
    pub theta: f64,
    /// Unwrapped surface integral.
    pub integral: f64,
    /// Signed enclosed area (steradian).
    pub area: f64,
    pub degenerate: bool,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Signed solid angle of the spherical triangle `(a, b, c)`.
fn signed_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let triple = a.dot(&b.cross(c));
    2.0 * triple.atan2(1.0 + a.dot(b) + b.dot(c) + c.dot(a))
}

fn midpoint(a: &Vec3, b: &Vec3) -> Vec3 {
    (a + b).normalize()
}

/// Edge-midpoint rule on the spherical triangle.
fn triangle_estimate(a: &Vec3, b: &Vec3, c: &Vec3, inertia: &Mat3) -> f64 {
    let area = signed_area(a, b, c);
    if area == 0.0 {
        return 0.0;
    }
    let mean = (phase_integrand(&midpoint(a, b), inertia)
        + phase_integrand(&midpoint(b, c), inertia)
        + phase_integrand(&midpoint(c, a), inertia))
        / 3.0;
    area * mean
}

fn adaptive(a: &Vec3, b: &Vec3, c: &Vec3, inertia: &Mat3, coarse: f64, depth: u32) -> f64 {
    let ab = midpoint(a, b);
    let bc = midpoint(b, c);
    let ca = midpoint(c, a);
    let children = [(*a, ab, ca), (ab, *b, bc), (ca, bc, *c), (ab, bc, ca)];
    let estimates = children.map(|(p, q, r)| triangle_estimate(&p, &q, &r, inertia));
    let fine: f64 = estimates.iter().sum();
    if (fine - coarse).abs() < QUADRATURE_TOL || depth >= MAX_DEPTH {
        return fine;
    }
    children.iter().zip(estimates).map(|((p, q, r), est)| adaptive(p, q, r, inertia, est, depth + 1)).sum()
}

/// Surface integral of [`phase_integrand`] over the region bounded by a closed loop.
pub fn surface_phase(reduced: &ReducedTrajectory, inertia: &Mat3) -> Result<PhaseEstimate, Error> {
    let points = reduced.points();
    let (first, last) = match (points.first(), points.last()) {
        (Some(first), Some(last)) if points.len() >= 2 => (first, last),
        _ => return Ok(PhaseEstimate { theta: 0.0, integral: 0.0, area: 0.0, degenerate: true }),
    };
    let gap = (first - last).norm();
    if !(gap <= CLOSURE_TOL) {
        return Err(Error::OpenLoop { gap });
    }

    let sum: Vec3 = points[..points.len() - 1].iter().sum();
    let apex = if sum.norm() > 1e-9 { sum.normalize() } else { *first };

    let mut area = 0.0;
    let mut integral = 0.0;
    for pair in points.windows(2) {
        let (p, q) = (&pair[0], &pair[1]);
        let coarse = triangle_estimate(&apex, p, q, inertia);
        area += signed_area(&apex, p, q);
        if coarse != 0.0 {
            integral += adaptive(&apex, p, q, inertia, coarse, 0);
        }
    }
    if area.abs() < DEGENERATE_AREA {
        return Ok(PhaseEstimate { theta: 0.0, integral: 0.0, area, degenerate: true });
    }
    Ok(PhaseEstimate { theta: wrap_angle(integral), integral, area, degenerate: false })
}

/// Rotation angle about the inertial vertical taking `start` to `end`.
pub fn yaw_between(start: &RotationMatrix, end: &RotationMatrix) -> Result<f64, Error> {
    let v = log_so3(&(end * &start.transpose()));
    let off_axis = v.xy().norm();
    if off_axis > 1e-6 {
        return Err(Error::NotVerticalRelation { off_axis });
    }
    Ok(v[2])
}
