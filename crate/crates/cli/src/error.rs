use std::path::PathBuf;

use encounter_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Hotspot { source, .. } => core_exit_code(source),
        CoreError::Io { .. } | CoreError::MissingFile { .. } => EXIT_IO,
        CoreError::InvalidParameter { .. } => EXIT_USAGE,
        e if e.is_data_error() => EXIT_DATA,
        CoreError::InsufficientChecklists { .. } => EXIT_DATA,
        _ => EXIT_RUNTIME,
    }
}

pub type CliResult<T> = Result<T, CliError>;
