use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    /// Bad configuration or violated operation precondition.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    /// Input data breaks a documented invariant.
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical(message.into())
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Data(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

/// Render at most `limit` offenders followed by a count of the rest.
pub(crate) fn list_offenders<S: AsRef<str>>(items: &[S], limit: usize) -> String {
    let shown: Vec<&str> = items.iter().take(limit).map(|s| s.as_ref()).collect();
    if items.len() > limit {
        format!("{} (and {} more)", shown.join(", "), items.len() - limit)
    } else {
        shown.join(", ")
    }
}
