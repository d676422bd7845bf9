//! Crate-wide error type. Every fallible operation reports which module and
//! operation rejected the input, so errors stay meaningful after propagation
//! through the pipeline.

use crate::io::tensor_file::FormatError;

/// Error raised by any engine operation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes are incompatible with the requested operation.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A scalar or structural argument is outside its documented domain.
    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    /// A configuration file failed schema or range validation.
    #[error("config: {0}")]
    Config(String),

    /// The binary tensor container was malformed. The cause carries the
    /// detail; it is reported via `source`, not duplicated in this message.
    #[error("tensor file")]
    Format(#[from] FormatError),

    /// An underlying filesystem operation failed. The cause carries the
    /// detail; it is reported via `source`, not duplicated in this message.
    #[error("io")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shape error tagged with the module-qualified operation name.
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Argument error tagged with the module-qualified operation name.
    pub fn arg(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
