use std::io;

use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    /// A tensor or layer received data of the wrong shape.
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    /// Overflow or NaN somewhere in the numeric pipeline.
    #[error("numerical failure at batch index {batch_index}: {detail}")]
    Numerical { batch_index: usize, detail: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Binary container could not be decoded.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LabError {
    pub(crate) fn shape(layer: usize, detail: impl Into<String>) -> Self {
        LabError::Shape {
            layer,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        LabError::Invalid(detail.into())
    }

    pub(crate) fn format(offset: u64, detail: impl Into<String>) -> Self {
        LabError::Format {
            offset,
            detail: detail.into(),
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, LabError::Numerical { .. })
    }
}
