use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point is behind the camera (camera-space depth {depth})")]
    BehindCamera { depth: f64 },

    /// Caller-supplied data violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A file or byte buffer does not follow its declared format.
    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },

    /// A body-model array failed validation.
    #[error("invalid body model field `{field}`: {detail}")]
    Model { field: String, detail: String },

    #[error("optimization diverged at iteration {iteration} (loss = {loss})")]
    Divergence { iteration: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(format: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            format,
            detail: detail.into(),
        }
    }

    pub(crate) fn model(field: &str, detail: impl Into<String>) -> Self {
        Error::Model {
            field: field.to_string(),
            detail: detail.into(),
        }
    }
}
