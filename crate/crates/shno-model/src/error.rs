use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Sht(#[from] sht_core::ShtError),
    #[error(transparent)]
    Diff(#[from] diff_engine::DiffError),
    #[error(transparent)]
    Attn(#[from] spectral_attention::AttnError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite values after the {stage} stage")]
    NonFinite { stage: &'static str },
    #[error("rollout produced non-finite fields at step {step}")]
    Rollout { step: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;
