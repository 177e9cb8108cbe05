//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while loading data, fitting a dictionary,
/// scoring instances, or evaluating results.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem failure, tagged with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content; `line` is 1-based within the file.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A value or combination of values violates a documented invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Vector or matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {found}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    /// An instance coincides with the background mean (zero whitened norm),
    /// or a signature whitens to the zero vector.
    #[error("degenerate vector: {0}")]
    Degenerate(String),

    /// A score set cannot support a ROC curve because only one class is present.
    #[error("single-class input: {0}")]
    SingleClass(&'static str),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn dims(expected: usize, found: usize, context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            context: context.into(),
        }
    }
}
