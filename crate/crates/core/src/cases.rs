//! Benchmark bodies and the four hanging-equilibrium yaw maneuvers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dynamics::{BodyParams, DiscreteState};
use crate::error::Error;
use crate::shooting::ProblemSpec;
use crate::so3::{RotationMatrix, Vec3};

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_STEP_SIZE: f64 = 0.01;

/// Elliptic cylinder, `m = 1`, `J = diag(0.13, 0.28, 0.17)`, `rho = 0.3 e3`.
pub fn body_a() -> BodyParams {
    BodyParams::diagonal(1.0, [0.13, 0.28, 0.17], Vec3::new(0.0, 0.0, 0.3)).expect("valid body")
}

/// Elliptic cylinder, `m = 1`, `J = diag(0.22, 0.23, 0.03)`, `rho = 0.4 e3`.
pub fn body_b() -> BodyParams {
    BodyParams::diagonal(1.0, [0.22, 0.23, 0.03], Vec3::new(0.0, 0.0, 0.4)).expect("valid body")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseId {
    /// Body A, 90 degree yaw.
    I,
    /// Body A, 180 degree yaw.
    II,
    /// Body B, 90 degree yaw.
    III,
    /// Body B, 180 degree yaw.
    IV,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::I, CaseId::II, CaseId::III, CaseId::IV];

    pub fn body(self) -> BodyParams {
        match self {
            CaseId::I | CaseId::II => body_a(),
            CaseId::III | CaseId::IV => body_b(),
        }
    }

    /// Yaw angle of the target attitude.
    pub fn yaw(self) -> f64 {
        match self {
            CaseId::I | CaseId::III => PI / 2.0,
            CaseId::II | CaseId::IV => PI,
        }
    }

    /// Target attitude, written out exactly.
    pub fn target_attitude(self) -> RotationMatrix {
        let m = match self {
            CaseId::I | CaseId::III => nalgebra::Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            CaseId::II | CaseId::IV => nalgebra::Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)),
        };
        RotationMatrix::new(m).expect("exact rotation")
    }

    pub fn problem(self, steps: usize, h: f64) -> Result<ProblemSpec, Error> {
        ProblemSpec::new(
            DiscreteState::hanging(),
            DiscreteState::new(self.target_attitude(), Vec3::zeros()),
            steps,
            h,
            self.body(),
        )
    }

    pub fn default_problem(self) -> ProblemSpec {
        self.problem(DEFAULT_STEPS, DEFAULT_STEP_SIZE).expect("built-in cases are feasible")
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseId::I => "i",
            CaseId::II => "ii",
            CaseId::III => "iii",
            CaseId::IV => "iv",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(CaseId::I),
            "ii" | "2" => Ok(CaseId::II),
            "iii" | "3" => Ok(CaseId::III),
            "iv" | "4" => Ok(CaseId::IV),
            other => Err(Error::InvalidProblem(format!("unknown case `{other}` (expected i, ii, iii or iv)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp_so3;
    use approx::assert_relative_eq;

    #[test]
    fn targets_are_vertical_rotations() {
        for case in CaseId::ALL {
            let expected = exp_so3(&Vec3::new(0.0, 0.0, case.yaw()));
            assert_relative_eq!(*case.target_attitude().matrix(), *expected.matrix(), epsilon = 1e-15);
        }
    }

    #[test]
    fn parse_round_trip() {
        for case in CaseId::ALL {
            assert_eq!(case.label().parse::<CaseId>().unwrap(), case);
        }
        assert!("v".parse::<CaseId>().is_err());
    }

    #[test]
    fn bodies() {
        assert_eq!(CaseId::I.body(), body_a());
        assert_eq!(CaseId::IV.body().rho, Vec3::new(0.0, 0.0, 0.4));
        assert_eq!(body_a().gravity, 9.81);
    }
}
