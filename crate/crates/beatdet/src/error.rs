//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`crate::Result`]. Variants
//! are grouped by the kind of failure rather than by module, so callers can
//! match on the broad class (bad input data, bad configuration, I/O) without
//! tracking which internal layer raised it.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An interval, beat list, or other geometric input violated a structural
    /// precondition (non-finite value, negative time, empty endpoints, ...).
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A beat annotation could not be interpreted (non-monotone times,
    /// bad metrical positions, downbeats that are not a subset of beats).
    #[error("invalid beat sequence: {0}")]
    InvalidBeats(String),

    /// A configuration value is out of range or internally inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Two containers that must be aligned (targets vs. predictions,
    /// pyramid levels vs. head parameters) have mismatched shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An annotated interval cannot be represented on the feature pyramid
    /// (for example it is longer than the analysed track).
    #[error("unassignable interval: {0}")]
    Unassignable(String),

    /// Numerical routine failed to produce a usable answer
    /// (too few distinct points for k-means, degenerate inputs, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Threshold selection could not find two separated histogram modes.
    #[error("no separation: {0}")]
    NoSeparation(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    /// A text file (annotation, config, report) failed to parse.
    /// `line` is 1-based; 0 means the error is not tied to a line.
    #[error("parse error in {path} (line {line}): {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// A binary file (WAV) is malformed or uses an unsupported encoding.
    #[error("unsupported or malformed audio in {path}: {detail}")]
    Audio { path: PathBuf, detail: String },

    /// Underlying filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error indicates bad *input data* rather than bad usage.
    /// The command-line tool maps data errors to a distinct exit code.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidConfig(_))
    }
}
