use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Sht(#[from] sht_core::ShtError),
    #[error(transparent)]
    Diff(#[from] diff_engine::DiffError),
    #[error(transparent)]
    Model(#[from] shno_model::ModelError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("channel {channel} of the truth field has zero weighted norm; the relative loss is undefined")]
    ZeroDenominator { channel: usize },
    #[error("zero anomaly variance in variable {variable}; the anomaly correlation is undefined")]
    ZeroAnomalyVariance { variable: usize },
    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("optimizer state for {name} has {got} entries but the parameter has {expected}")]
    StateShape {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("malformed optimizer checkpoint: {0}")]
    BadCheckpoint(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;
