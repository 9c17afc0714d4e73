//! Spherical spectral forecasting models.
//!
//! This crate assembles grid-to-grid forecasters from the spherical
//! harmonic transform and the complex attention blocks: a pointwise
//! encoder lifts input fields into a latent channel space, a stack of
//! spectral layers mixes information globally in coefficient space (with
//! graph-attention Laplacians threaded layer to layer) and locally through
//! strip gating and multi-scale feed-forward stencils, and a pointwise
//! decoder conditioned on the raw input produces the forecast. A
//! per-degree linear baseline and a persistence baseline share the same
//! `Forecaster` trait, and an autoregressive rollout driver iterates any
//! of them.

mod blocks;
mod bridge;
mod config;
mod ela;
mod error;
mod layer;
mod model;
mod mpffn;
mod rollout;

pub use blocks::{channel_map, Norm2d, PointwiseMlp};
pub use bridge::{grid_from_tokens, sht_tokens};
pub use config::ShnoConfig;
pub use ela::{ela, ElaParams};
pub use error::{ModelError, Result};
pub use layer::{
    sfno_layer, shno_layer, AttentionKind, AttnBlock, SfnoLayerParams, ShnoLayerParams,
};
pub use model::{
    build_model, Forecaster, PersistenceForecaster, SfnoLinearForecaster, ShnoForecaster,
    MODEL_FAMILIES,
};
pub use mpffn::{mpffn, MpffnParams};
pub use rollout::rollout;
