use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("invalid argument in {op}: {details}")]
    InvalidArgument { op: &'static str, details: String },
    #[error("backward expects a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
}

impl DiffError {
    pub(crate) fn shape(op: &'static str, details: impl Into<String>) -> Self {
        DiffError::ShapeMismatch {
            op,
            details: details.into(),
        }
    }

    pub(crate) fn arg(op: &'static str, details: impl Into<String>) -> Self {
        DiffError::InvalidArgument {
            op,
            details: details.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DiffError>;
