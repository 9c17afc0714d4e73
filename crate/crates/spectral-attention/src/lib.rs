//! Complex-valued attention over spherical-harmonic tokens.
//!
//! The building blocks live close to their math:
//! - [`csoftmax`]: softmax applied independently to real and imaginary parts;
//! - [`smhsa`]: multi-head attention `CSoftmax(Q·K^H/√d)·V` on complex tokens;
//! - [`parametric_laplacian`]: a per-head graph Laplacian
//!   `L = σ(α)(D − A) + (1−σ(α))·L_prev` whose adjacency
//!   `A = tril(B)·tril(B)^H` is Hermitian PSD by construction;
//! - [`grsa`]: the gated recurrent block that mixes tokens through `L`,
//!   gates the result, and carries the Laplacian to the next layer;
//! - [`laplacian_diagnostics`]: row-sum / Hermitianity / spectrum monitors.
//!
//! Everything is recorded on a [`diff_engine::Tape`], so all blocks are
//! differentiable in every parameter and input.

mod csoftmax;
mod diagnostics;
mod error;
mod grsa;
mod laplacian;
mod linear;
mod smhsa;
mod smu;
mod tokens;

pub use csoftmax::csoftmax;
pub use diagnostics::{laplacian_diagnostics, LaplacianDiagnostics};
pub use error::{AttnError, Result};
pub use grsa::{grsa, GrsaParams};
pub use laplacian::{adjacency, parametric_laplacian, LaplacianState};
pub use linear::{CLinear, ComplexMlp};
pub use smhsa::{smhsa, SmhsaParams};
pub use smu::{smu, smu_c, SMU_ALPHA};
pub use tokens::SpectralTokens;
