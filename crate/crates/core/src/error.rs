use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a validity requirement (non-finite values,
    /// malformed probabilities).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Arguments are structurally wrong for the operation (shape mismatch,
    /// zero-sized targets, empty selections).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The operation was called on a value that is not ready for it.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The initial mask contains no foreground pixels, so there is nothing
    /// to track.
    #[error("initial mask has no foreground pixels")]
    EmptyTarget,
    /// A file could not be decoded; `kind` pins down the exact failure.
    #[error("{path}: {kind}")]
    File { path: PathBuf, kind: FileErrorKind },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Distinct failure codes for file decoding and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileErrorKind {
    /// The file does not start with the expected magic bytes.
    BadMagic,
    /// The header fields are unusable (zero dimensions, absurd sizes).
    BadHeader,
    /// The payload ends before the header-declared length.
    TruncatedPayload,
    /// Extra bytes follow the header-declared payload.
    TrailingData,
    /// The payload contains NaN or infinite values.
    NonFinite,
    /// A mask pixel carries a label above the declared object count.
    LabelRange,
}

impl fmt::Display for FileErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            FileErrorKind::BadMagic => "bad magic bytes",
            FileErrorKind::BadHeader => "unusable header",
            FileErrorKind::TruncatedPayload => "truncated payload",
            FileErrorKind::TrailingData => "trailing data after payload",
            FileErrorKind::NonFinite => "non-finite value in payload",
            FileErrorKind::LabelRange => "label exceeds declared object count",
        };
        f.write_str(msg)
    }
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, kind: FileErrorKind) -> Self {
        Error::File { path: path.into(), kind }
    }

    /// The file-error kind, if this is a file error.
    pub fn file_kind(&self) -> Option<FileErrorKind> {
        match self {
            Error::File { kind, .. } => Some(*kind),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
