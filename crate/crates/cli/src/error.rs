use std::fmt;
use std::process::ExitCode;

use stokes_recon::Error;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or inputs.
    Config(String),
    /// Solver or file-system failure during a run.
    Run(String),
    /// A check exceeded its tolerance.
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
            CliError::Validation(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidMesh(_) | Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::UnknownExample(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(e.to_string())
    }
}
