use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Diagnostics attached to a failed batch optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationDiagnostics {
    pub candidates_evaluated: usize,
    pub non_finite_candidates: usize,
    pub last_error: Option<String>,
}

impl std::fmt::Display for OptimizationDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} of {} candidate batches produced non-finite objective values",
            self.non_finite_candidates, self.candidates_evaluated
        )?;
        if let Some(err) = &self.last_error {
            write!(f, " (last error: {err})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("point {index} lies outside the domain of `{problem}`")]
    Domain { problem: String, index: usize },

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(OptimizationDiagnostics),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures caused by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::OptimizationFailed(_))
    }
}
