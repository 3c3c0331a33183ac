//! Exit codes and the `error: code=... message=...` line.

use std::fmt;
use std::io;

use interrupt_engine::features::{FrameIoError, NormalizeError};
use interrupt_engine::ldcrf::LdcrfError;
use interrupt_engine::scene::LogError;
use interrupt_engine::sim::SimError;
use interrupt_woz::{ExportError, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// I/O or service failure not caused by the input.
    Failure,
    /// Unknown flag.
    UnknownFlag,
    /// Any other command-line misuse.
    Usage,
    MissingFile,
    /// A model, trial log or config file of another format version.
    SchemaVersion,
    /// The input is well formed but the command cannot run on it.
    Precondition,
    InvalidInput,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Failure => 1,
            ErrorKind::UnknownFlag => 2,
            ErrorKind::Usage => 3,
            ErrorKind::MissingFile => 4,
            ErrorKind::SchemaVersion => 5,
            ErrorKind::Precondition => 6,
            ErrorKind::InvalidInput => 7,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Failure => "failure",
            ErrorKind::UnknownFlag => "unknown_flag",
            ErrorKind::Usage => "usage",
            ErrorKind::MissingFile => "missing_file",
            ErrorKind::SchemaVersion => "schema_version",
            ErrorKind::Precondition => "precondition",
            ErrorKind::InvalidInput => "invalid_input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    /// The single machine-readable line printed on stderr. The message is a
    /// JSON string literal.
    pub fn line(&self) -> String {
        let message = serde_json::to_string(&self.message).expect("strings serialize");
        format!("error: code={} exit={} message={message}", self.kind.code(), self.kind.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn io_kind(e: &io::Error) -> ErrorKind {
    if e.kind() == io::ErrorKind::NotFound {
        ErrorKind::MissingFile
    } else {
        ErrorKind::Failure
    }
}

impl From<LdcrfError> for CliError {
    fn from(e: LdcrfError) -> Self {
        let kind = match &e {
            LdcrfError::Version(_) | LdcrfError::Normalize(NormalizeError::Version(_)) => ErrorKind::SchemaVersion,
            LdcrfError::TooFewTrials { .. } | LdcrfError::EmptyDataset => ErrorKind::Precondition,
            LdcrfError::Io { source, .. } => io_kind(source),
            _ => ErrorKind::InvalidInput,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(inner) => inner.into(),
            SimError::Version(_) => Self::new(ErrorKind::SchemaVersion, e.to_string()),
            SimError::Io { ref source, .. } => Self::new(io_kind(source), e.to_string()),
            _ => Self::new(ErrorKind::InvalidInput, e.to_string()),
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        let kind = match &e {
            LogError::Io { source, .. } => io_kind(source),
            LogError::Malformed { .. } => ErrorKind::InvalidInput,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<FrameIoError> for CliError {
    fn from(e: FrameIoError) -> Self {
        let kind = match &e {
            FrameIoError::Io { source, .. } => io_kind(source),
            FrameIoError::Malformed { .. } => ErrorKind::InvalidInput,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<NormalizeError> for CliError {
    fn from(e: NormalizeError) -> Self {
        let kind = match e {
            NormalizeError::Version(_) => ErrorKind::SchemaVersion,
            _ => ErrorKind::InvalidInput,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::Io(inner) => inner.into(),
            other => Self::new(ErrorKind::Precondition, other.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Sim(inner) => inner.into(),
            ServiceError::Export(inner) => inner.into(),
            ServiceError::Config(_) => Self::new(ErrorKind::InvalidInput, e.to_string()),
            _ => Self::new(ErrorKind::Failure, e.to_string()),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: io::Error) -> CliError {
    CliError::new(io_kind(&e), format!("{}: {e}", path.display()))
}
