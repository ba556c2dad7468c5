use std::path::PathBuf;
use thiserror::Error;

/// Failures of the command-line tool, each mapped to a distinct exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("{failed} of {total} runs failed")]
    PartialFailure { failed: usize, total: usize },

    #[error("all {0} failed runs broke down numerically")]
    Numerical(usize),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::PartialFailure { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::MissingFile(_) => 5,
            CliError::UnknownProblem(_) => 6,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<beebo_core::Error> for CliError {
    fn from(e: beebo_core::Error) -> Self {
        match e {
            beebo_core::Error::UnknownProblem(id) => CliError::UnknownProblem(id),
            other => CliError::Config(other.to_string()),
        }
    }
}
