//! CLI error classes mapped onto process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("check failure: {0}")]
    Check(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl From<fotinv_core::Error> for CliError {
    fn from(err: fotinv_core::Error) -> Self {
        use fotinv_core::Error as E;
        match err {
            E::SolveResidual { .. } | E::Singular { .. } => CliError::Solver(err.to_string()),
            E::CheckFailure(_) => CliError::Check(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}
