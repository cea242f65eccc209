//! Command errors and their process exit codes.

use std::fmt;

use seqcoupon::Error;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2: the configuration could not be parsed or is invalid.
    Config(String),
    /// Exit 3: reading or writing files failed, or an output directory
    /// belongs to a different run.
    Io(String),
    /// Exit 4: the log cannot separate treatment from control.
    Unidentifiable(String),
    /// Exit 5: model artifacts do not match the current feature encoders.
    Schema(String),
    /// Exit 6: a log has no holdout records.
    MissingHoldout(String),
    /// Exit 1.
    Internal(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Unidentifiable(_) => 4,
            CliError::Schema(_) => 5,
            CliError::MissingHoldout(_) => 6,
        }
    }

    /// Maps an error raised while handling input files: parse and IO
    /// problems become exit 3.
    pub fn from_input(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Parse(_) => {
                CliError::Io(e.to_string())
            }
            other => other.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Unidentifiable(_) => CliError::Unidentifiable(msg),
            Error::SchemaMismatch { .. } => CliError::Schema(msg),
            Error::MissingHoldout(_) => CliError::MissingHoldout(msg),
            Error::Io(_) | Error::Csv(_) => CliError::Io(msg),
            _ => CliError::Internal(msg),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config error", m),
            CliError::Io(m) => ("io error", m),
            CliError::Unidentifiable(m) => ("unidentifiable", m),
            CliError::Schema(m) => ("schema mismatch", m),
            CliError::MissingHoldout(m) => ("missing holdout", m),
            CliError::Internal(m) => ("internal error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}

pub fn io_error(context: impl fmt::Display, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}
