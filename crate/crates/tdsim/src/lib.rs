//! Command-line front end and local HTTP service for `tdsim-core`.

pub mod cli;
pub mod service;

use tdsim_core::Error;

/// Failure of a CLI command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for usage errors, 2 for bad data or files, 3 for solver failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if is_solver_failure(e) => 3,
            CliError::Core(_) => 2,
            CliError::Runtime(_) => 2,
        }
    }
}

pub fn is_solver_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::SolverInstability(_) | Error::StepSizeCollapse { .. } | Error::OptimizationStalled(_)
    )
}
