use std::fmt;
use std::io;
use std::path::PathBuf;

/// Errors from file-format handling (IDX ingestion, checkpoints).
#[derive(Debug)]
pub enum DataError {
    Io { path: PathBuf, source: io::Error },
    /// A magic number did not match the format.
    BadMagic { expected: u32, actual: u32 },
    /// The byte stream ended before a declared field.
    Truncated { what: &'static str },
    /// Image and label files disagree on the sample count.
    CountMismatch { images: usize, labels: usize },
    /// Checkpoint version this build does not understand.
    UnsupportedVersion(u32),
    /// Stored CRC does not match the payload.
    CrcMismatch { expected: u32, actual: u32 },
    /// Structurally invalid payload (duplicate/missing/unknown sections,
    /// inconsistent shapes).
    Malformed(String),
    /// The decoded pieces do not assemble into a valid network.
    Core(prunelab_core::Error),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Self::BadMagic { expected, actual } => {
                write!(f, "bad magic: expected {expected:#010x}, got {actual:#010x}")
            }
            Self::Truncated { what } => write!(f, "truncated while reading {what}"),
            Self::CountMismatch { images, labels } => {
                write!(f, "{images} images but {labels} labels")
            }
            Self::UnsupportedVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            Self::CrcMismatch { expected, actual } => {
                write!(f, "crc mismatch: stored {expected:#010x}, computed {actual:#010x}")
            }
            Self::Malformed(msg) => write!(f, "malformed payload: {msg}"),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DataError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io { source, .. } => Some(source),
            Self::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<prunelab_core::Error> for DataError {
    fn from(e: prunelab_core::Error) -> Self {
        Self::Core(e)
    }
}

/// Errors from configuration and pipeline execution.
#[derive(Debug)]
pub enum HarnessError {
    /// Configuration failed validation before any compute.
    Config(String),
    /// Configuration file could not be read or parsed.
    ConfigIo { path: PathBuf, detail: String },
    Data(DataError),
    Core(prunelab_core::Error),
    Io { path: PathBuf, source: io::Error },
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "invalid config: {msg}"),
            Self::ConfigIo { path, detail } => {
                write!(f, "config {}: {detail}", path.display())
            }
            Self::Data(e) => write!(f, "{e}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for HarnessError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Data(e) => Some(e),
            Self::Core(e) => Some(e),
            Self::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        Self::Data(e)
    }
}

impl From<prunelab_core::Error> for HarnessError {
    fn from(e: prunelab_core::Error) -> Self {
        Self::Core(e)
    }
}
