use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShtError {
    #[error("truncation (n_max={n_max}, m_max={m_max}) does not fit grid {nlat}x{nlon}: need nlat >= n_max+1 and nlon >= 2*m_max+1")]
    GridTruncationMismatch {
        nlat: usize,
        nlon: usize,
        n_max: usize,
        m_max: usize,
    },
    #[error("n_max={0} exceeds supported limit 1500 (sectoral Legendre seeds underflow past rescaling range)")]
    TruncationTooLarge(usize),
    #[error("channel count mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("truncation mismatch: {0}")]
    TruncationMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, ShtError>;
