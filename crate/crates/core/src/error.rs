use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed input file; `line`/`column` are 1-based.
    #[error("parse error in {what} at line {line}, column {column}: {message}")]
    Parse {
        what: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no answer: {0}")]
    NoAnswer(String),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Parse {
                what,
                line,
                column,
                message,
            } => Error::Parse {
                what: format!("{what} {}", path.display()),
                line,
                column,
                message,
            },
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        }
    }

    pub(crate) fn json(what: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            what: what.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

/// Reads a UTF-8 file, attaching the path to any I/O failure.
pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads `path` and parses it with `parse`, naming the file in parse and
/// validation errors.
pub(crate) fn load_file<T>(
    path: &std::path::Path,
    parse: impl FnOnce(&str) -> Result<T>,
) -> Result<T> {
    parse(&read_file(path)?).map_err(|e| e.in_file(path))
}

/// Parses a JSON document, reporting failures as [`Error::Parse`] with position.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::json(what, &e))
}
