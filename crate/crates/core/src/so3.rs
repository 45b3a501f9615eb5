//! Rotation-group algebra: the hat/vee isomorphism between `R^3` and `so(3)`,
//! the exponential and logarithm maps, and a validated rotation-matrix newtype.
//!
//! Every routine here is closed form. The exponential uses the Rodrigues
//! formula with a Taylor fallback near the identity, and the logarithm picks
//! the principal branch with a deterministic axis at angle `pi`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `||R^T R - I||_F` and `|det R - 1|` when constructing a rotation.
pub const ROTATION_TOL: f64 = 1e-12;

/// Default tolerance on `||M + M^T||_F` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-10;

const SMALL_ANGLE: f64 = 1e-6;

/// Gravity direction in the inertial frame.
pub fn e3() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// Skew-symmetric matrix with `hat(v) * y == v x y`.
#[rustfmt::skip]
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(
         0.0, -v[2],  v[1],
        v[2],   0.0, -v[0],
       -v[1],  v[0],   0.0,
    )
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3, Error> {
    vee_with_tol(m, SKEW_TOL)
}

pub fn vee_with_tol(m: &Mat3, tol: f64) -> Result<Vec3, Error> {
    let asym = (m + m.transpose()).norm();
    if asym > tol {
        return Err(Error::NonSkewInput { asymmetry: asym });
    }
    Ok(vee_skew_part(m))
}

/// `vee` of the skew part `(m - m^T)/2`, without validation.
pub fn vee_skew_part(m: &Mat3) -> Vec3 {
    Vec3::new(0.5 * (m[(2, 1)] - m[(1, 2)]), 0.5 * (m[(0, 2)] - m[(2, 0)]), 0.5 * (m[(1, 0)] - m[(0, 1)]))
}

/// An element of SO(3).
#[derive(Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn new(m: Mat3) -> Result<Self, Error> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NotRotation { orthogonality: f64::NAN, det: f64::NAN });
        }
        let orthogonality = (m.transpose() * m - Mat3::identity()).norm();
        let det = m.determinant();
        if orthogonality > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::NotRotation { orthogonality, det });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Rotation by `angle` about the inertial vertical `e3`.
    pub fn about_vertical(angle: f64) -> Self {
        exp_so3(&(angle * e3()))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `||R^T R - I||_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Body-frame gravity direction `R^T e3`.
    pub fn gravity_in_body(&self) -> Vec3 {
        self.0.row(2).transpose()
    }
}

impl fmt::Debug for RotationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("RotationMatrix").field(&self.0).finish()
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<&RotationMatrix> for &RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for &RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// `sin(t)/t` and `(1 - cos t)/t^2` with series evaluation near zero.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    }
}

/// Exponential map `so(3) -> SO(3)` (Rodrigues).
pub fn exp_so3(v: &Vec3) -> RotationMatrix {
    let theta = v.norm();
    let (a, b) = rodrigues_coefficients(theta);
    let s = hat(v);
    RotationMatrix(Mat3::identity() + a * s + b * s * s)
}

/// Right Jacobian of the exponential: `exp(v + d) ~= exp(v) exp(jr(v) d)`.
pub fn right_jacobian(v: &Vec3) -> Mat3 {
    let theta = v.norm();
    let (b, c) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let s = hat(v);
    Mat3::identity() - b * s + c * s * s
}

/// Principal logarithm `SO(3) -> so(3)`, returned as a rotation vector with
/// norm in `[0, pi]`.
///
/// At angle `pi` both `n` and `-n` are valid axes; the one whose first
/// nonzero component is positive is returned.
pub fn log_so3(r: &RotationMatrix) -> Vec3 {
    let m = r.matrix();
    let sin_axis = vee_skew_part(m);
    let sin_theta = sin_axis.norm();
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        // sin(t)/t ~= 1 - t^2/6
        return sin_axis * (1.0 + theta * theta / 6.0);
    }
    if theta < PI - 1e-4 {
        return sin_axis * (theta / sin_theta);
    }

    // Near pi the skew part vanishes; recover the axis from the symmetric part
    // (R + R^T)/2 = cos(t) I + (1 - cos(t)) n n^T.
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Mat3::identity() * cos_theta) / (1.0 - cos_theta);
    let col = (0..3).max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)])).unwrap_or(0);
    let mut axis: Vec3 = outer.column(col).into_owned();
    axis /= axis.norm();

    let alignment = axis.dot(&sin_axis);
    if alignment.abs() > 1e-14 {
        if alignment < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            axis = -axis;
        }
    }
    axis * theta
}
