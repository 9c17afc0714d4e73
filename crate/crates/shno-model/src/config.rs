use crate::error::{ModelError, Result};
use sht_core::Truncation;

/// Hyperparameters shared by every model family. The same config drives the
/// SHNO variants, the SFNO-linear baseline (which ignores the attention
/// fields), and persistence (which ignores everything but channel counts).
#[derive(Debug, Clone, PartialEq)]
pub struct ShnoConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Latent channel count C.
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub registers: usize,
    /// Spectral truncation of the latent token space.
    pub n_max: usize,
    pub m_max: usize,
    /// Gaussian grid the model operates on.
    pub nlat: usize,
    pub nlon: usize,
    /// Hidden width of the feed-forward block, as a multiple of C.
    pub ffn_expansion: usize,
    /// Append sin(latitude) and cos(latitude) as constant encoder inputs.
    pub coord_channels: bool,
    pub seed: u64,
}

impl ShnoConfig {
    pub fn validate(&self) -> Result<&Self> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.in_channels == 0 || self.out_channels == 0 || self.embed_dim == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.layers == 0 {
            return bad("need at least one layer".into());
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!(
                "embed_dim {} not divisible into {} heads",
                self.embed_dim, self.heads
            ));
        }
        let hidden = self.ffn_hidden();
        if hidden == 0 || hidden % 4 != 0 {
            return bad(format!(
                "feed-forward hidden width {hidden} must be a positive multiple of 4 \
                 (split into half/quarter/quarter paths)"
            ));
        }
        let trunc = self.truncation()?;
        if !trunc.fits_grid(self.nlat, self.nlon) {
            return bad(format!(
                "truncation ({}, {}) does not fit a {}x{} grid",
                self.n_max, self.m_max, self.nlat, self.nlon
            ));
        }
        Ok(self)
    }

    pub fn truncation(&self) -> Result<Truncation> {
        Ok(Truncation::new(self.n_max, self.m_max)?)
    }

    pub fn ffn_hidden(&self) -> usize {
        self.ffn_expansion * self.embed_dim
    }

    /// Encoder input width: raw channels plus optional coordinate features.
    pub fn encoder_in(&self) -> usize {
        self.in_channels + if self.coord_channels { 2 } else { 0 }
    }
}
