use std::path::PathBuf;

use lognorm_core::Error as CoreError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NOT_CERTIFIED: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// Bad input maps to 2, computational failures to 5.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                CoreError::InvalidInput(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::NotSymmetric { .. }
                | CoreError::NotPositiveDefinite
                | CoreError::NotHurwitz(_)
                | CoreError::OutOfDomain { .. }
                | CoreError::Unknown { .. } => EXIT_USAGE,
                _ => EXIT_NUMERIC,
            },
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
