use crate::error::{AttnError, Result};
use diff_engine::CTensor;
use std::sync::Arc;

/// A batch of complex token matrices (..., N, C) plus the map from token
/// index to the spherical mode (n, m) it represents.
#[derive(Debug, Clone)]
pub struct SpectralTokens {
    pub values: CTensor,
    pub modes: Arc<Vec<(usize, usize)>>,
}

impl SpectralTokens {
    pub fn new(values: CTensor, modes: Arc<Vec<(usize, usize)>>) -> Result<Self> {
        let shape = values.shape();
        if shape.len() < 2 {
            return Err(AttnError::Shape("tokens need at least (N, C)".into()));
        }
        if shape[shape.len() - 2] != modes.len() {
            return Err(AttnError::Shape(format!(
                "{} tokens but {} mode entries",
                shape[shape.len() - 2],
                modes.len()
            )));
        }
        let finite = |t: &diff_engine::Tensor| t.values().iter().all(|v| v.is_finite());
        if !(finite(&values.re) && finite(&values.im)) {
            return Err(AttnError::Shape("token values must be finite".into()));
        }
        Ok(Self { values, modes })
    }

    pub fn token_count(&self) -> usize {
        self.modes.len()
    }

    pub fn channels(&self) -> usize {
        *self.values.shape().last().unwrap()
    }
}
