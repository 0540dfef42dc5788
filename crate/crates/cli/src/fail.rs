use std::path::Path;
use std::process::ExitCode;

use mgmarket::Error;

pub type CliResult<T> = Result<T, CliError>;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    MissingInput(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::MissingInput(_) => ExitCode::from(3),
            CliError::Numeric(_) => ExitCode::from(4),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(format!("{}: not found", path.display()))
        } else {
            CliError::MissingInput(format!("{}: {e}", path.display()))
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::MissingInput(m) => write!(f, "missing input: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Empty(_) => CliError::MissingInput(msg),
            Error::InvalidParameter { .. }
            | Error::WindowTooShort { .. }
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Json(_) => CliError::Usage(msg),
            Error::Shape(_)
            | Error::Factorization(_)
            | Error::ArbitrageBounds { .. }
            | Error::NoCriticalPoint
            | Error::CrowdedBranch { .. }
            | Error::NoConvergence(_) => CliError::Numeric(msg),
        }
    }
}
