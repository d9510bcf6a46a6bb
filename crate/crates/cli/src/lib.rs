//! IO, file formats and the command-line surface for the Credibility
//! Transformer. The numerical engine lives in `credtrans-core`.

pub mod config;
pub mod dataio;
pub mod export;
pub mod modelio;
pub mod report;

/// Process exit codes of the CLI.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const IO: i32 = 4;
}

use std::fmt;

/// Failure carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: exit_codes::CONFIG, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { code: exit_codes::NUMERIC, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: exit_codes::IO, message: message.into() }
    }

    /// Map a core error onto the exit-code classes: training divergence and
    /// non-finite numerics are numerical failures, everything else is a
    /// configuration/schema problem.
    pub fn from_core(err: credtrans_core::Error) -> Self {
        use credtrans_core::Error as E;
        match err {
            E::Divergence { .. } | E::NonFinite { .. } | E::NonPositiveMu { .. } => {
                CliError::numeric(err.to_string())
            }
            other => CliError::config(other.to_string()),
        }
    }
}

impl From<credtrans_core::Error> for CliError {
    fn from(err: credtrans_core::Error) -> Self {
        CliError::from_core(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::io(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
