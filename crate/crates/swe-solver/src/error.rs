use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweError {
    #[error(transparent)]
    Sht(#[from] sht_core::ShtError),
    #[error("nonfinite values in {field} at t = {time_s} s")]
    NonFinite { field: String, time_s: f64 },
    #[error("CFL violation at t = {time_s} s: dt = {dt} s exceeds limit {limit:.1} s")]
    CflViolation { dt: f64, limit: f64, time_s: f64 },
    #[error("ensemble member {member} failed: {source}")]
    MemberFailed {
        member: usize,
        #[source]
        source: Box<SweError>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, SweError>;
