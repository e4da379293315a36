use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every module of the crate.
///
/// Messages are prefixed with the module that raised them so that a failure
/// surfacing through the CLI still says where it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor: shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{module}: non-finite value in {context}")]
    NonFinite {
        module: &'static str,
        context: String,
    },

    #[error("{module}: domain violation: {detail}")]
    Domain {
        module: &'static str,
        detail: String,
    },

    #[error("{module}: invalid argument: {detail}")]
    InvalidArgument {
        module: &'static str,
        detail: String,
    },

    #[error("autodiff: {0}")]
    Tape(String),

    #[error("training: non-finite {what} at iteration {iteration}")]
    Diverged { what: &'static str, iteration: usize },

    #[error("data: {path}: row {row}, column '{column}': cannot parse '{cell}' as a number")]
    MalformedCell {
        path: PathBuf,
        row: usize,
        column: String,
        cell: String,
    },

    #[error("data: {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(module: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            module,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(module: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            module,
            detail: detail.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn non_finite(module: &'static str, context: impl Into<String>) -> Self {
        Error::NonFinite {
            module,
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error is a missing input file.
    pub fn is_not_found(&self) -> bool {
        matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
