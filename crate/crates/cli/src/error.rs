use std::path::Path;

use thiserror::Error;

use rv_core::bench::BenchError;
use rv_core::trace::TraceError;

/// Exit codes besides the verdict codes 0..=3.
pub const EX_USAGE: i32 = 64;
pub const EX_DATAERR: i32 = 65;
pub const EX_NOINPUT: i32 = 66;
pub const EX_SOFTWARE: i32 = 70;
pub const EX_IOERR: i32 = 74;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    DataFormat(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{0}")]
    Failed(String),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EX_USAGE,
            CliError::DataFormat(_) => EX_DATAERR,
            CliError::MissingInput(_) => EX_NOINPUT,
            CliError::Failed(_) => EX_SOFTWARE,
            CliError::Write { .. } => EX_IOERR,
        }
    }

    pub fn write(path: &Path, source: std::io::Error) -> Self {
        CliError::Write { path: path.display().to_string(), source }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Unknown(_) => CliError::Usage(e.to_string()),
            BenchError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(e.to_string())
            }
            BenchError::Config(_) | BenchError::Parse { .. } | BenchError::Io { .. } => CliError::DataFormat(e.to_string()),
            BenchError::Simulation(_) => CliError::Failed(e.to_string()),
        }
    }
}

/// Classifies an error reading `path`.
pub fn read_error(path: &Path, e: TraceError) -> CliError {
    match e {
        TraceError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            CliError::MissingInput(path.display().to_string())
        }
        TraceError::Io(io) => CliError::Failed(format!("{}: {io}", path.display())),
        other => CliError::DataFormat(format!("{}: {other}", path.display())),
    }
}
