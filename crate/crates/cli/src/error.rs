//! CLI error taxonomy mapped to exit codes.
//!
//! 0 ok, 2 config error, 3 stability violation, 4 analysis infeasible,
//! 1 anything else.

use std::fmt;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Stability(String),
    Analysis(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stability(_) => 3,
            CliError::Analysis(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Stability(msg) => write!(f, "stability violation: {msg}"),
            CliError::Analysis(msg) => write!(f, "analysis infeasible: {msg}"),
            CliError::Other(err) => write!(f, "{err:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ttsa::Error> for CliError {
    fn from(err: ttsa::Error) -> Self {
        use ttsa::Error::*;
        match err {
            InvalidSchedule { .. } | UnknownScenario(_) | NonFiniteInput { .. }
            | MalformedKernelRow { .. } | ReducibleKernel { .. } => {
                CliError::Config(err.to_string())
            }
            StabilityViolation { .. } | Diverged { .. } => CliError::Stability(err.to_string()),
            InfeasibleInvariantProgram { .. }
            | TimeOutOfRange { .. }
            | BadWindow { .. }
            | InsufficientTail { .. }
            | OdeBlowUp { .. }
            | UnnormalizedWeights { .. } => CliError::Analysis(err.to_string()),
            other => CliError::Other(anyhow::anyhow!(other)),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Other(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Other(err.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Other(err.into())
    }
}
