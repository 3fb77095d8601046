use emerge_core::error::Error as CoreError;
use thiserror::Error;

/// Failures, split by the exit status they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{field}: {reason}")]
    Input { field: String, reason: String },

    #[error("solver: {0}")]
    Solver(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn input(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Input {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Io(_) => 1,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Solver(_) | CoreError::Consistency(_) | CoreError::DualInfeasible { .. } => {
                CliError::Solver(e.to_string())
            }
            CoreError::InvalidInput { field, reason } => CliError::Input { field, reason },
            CoreError::DimensionMismatch { what, .. } => CliError::input(what, e.to_string()),
            CoreError::NotMonotone { .. } => CliError::input("grid.values", e.to_string()),
            CoreError::Alignment { marginal, .. } => {
                CliError::input(format!("marginals[{marginal}]"), e.to_string())
            }
            other => CliError::input("scenario", other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input("scenario", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}
