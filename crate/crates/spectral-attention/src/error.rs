use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttnError {
    #[error(transparent)]
    Diff(#[from] diff_engine::DiffError),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, AttnError>;
