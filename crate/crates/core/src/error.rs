use thiserror::Error;

use crate::shooting::Solution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (||M + M^T|| = {asymmetry:e})")]
    NonSkewInput { asymmetry: f64 },

    #[error("matrix is not a rotation (||R^T R - I|| = {orthogonality:e}, det = {det})")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("invalid body parameters: {0}")]
    InvalidBody(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },

    #[error("variation matrix is singular (condition {cond:e})")]
    SingularVariation { cond: f64 },

    #[error("sensitivity system is ill-conditioned (condition {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("infeasible problem: vertical momentum {initial} cannot reach {terminal}")]
    InfeasibleProblem { initial: f64, terminal: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("shooting did not converge within {} outer iterations (error {:e})", .0.record.outer_iterations(), .0.error)]
    MaxIterations(Box<Solution>),

    #[error("reduced loop is not closed (gap {gap:e})")]
    OpenLoop { gap: f64 },

    #[error("attitudes are not related by a vertical rotation (off-axis {off_axis:e})")]
    NotVerticalRelation { off_axis: f64 },

    #[error("at step {index}: {source}")]
    AtStep {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, index: usize) -> Error {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep { index, source: Box::new(e) },
        }
    }

    /// The innermost error, with step annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}
