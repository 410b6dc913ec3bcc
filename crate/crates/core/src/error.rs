use thiserror::Error;

use crate::sched::SubSolution1;
use crate::trajectory::TrajectoryState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("lambert W domain error: argument {0} is below -1/e")]
    LambertDomain(f64),

    #[error("infeasible: {}", .reasons.join("; "))]
    Infeasible { reasons: Vec<String> },

    #[error("scheduling/time-allocation solver did not converge after {iterations} iterations (max residual {residual:.3e})")]
    SchedNonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<SubSolution1>,
    },

    #[error("trajectory solver did not converge after {iterations} iterations (max energy violation {violation:.3e} J)")]
    TrajNonConvergence {
        iterations: usize,
        violation: f64,
        best: Box<TrajectoryState>,
    },

    #[error("BCD objective increased at outer iteration {iteration}: {previous} -> {current}")]
    MonotonicityViolation {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn infeasible(reason: impl Into<String>) -> Self {
        Error::Infeasible {
            reasons: vec![reason.into()],
        }
    }

    /// Stable machine-readable category, used for CLI exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::Config(_) | Error::Json(_) => "config-parse",
            Error::Infeasible { .. } => "infeasible",
            Error::SchedNonConvergence { .. } | Error::TrajNonConvergence { .. } => {
                "non-convergence"
            }
            Error::MonotonicityViolation { .. } => "monotonicity-violation",
            Error::LambertDomain(_) => "numerical",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }
}
