//! Spherical harmonic transforms on Gaussian grids: quadrature, normalized
//! Legendre tables, scalar and vector (wind) transforms, and spectral
//! diagnostics. Everything is f64 and deterministic; loops run in a fixed
//! order so repeated runs are bit-identical.

mod error;
mod grid;
mod legendre;
mod quadrature;
mod spectral;
mod transform;
mod truncation;

pub use error::{Result, ShtError};
pub use grid::{GridField, SphericalGrid};
pub use legendre::{legendre_deriv_table, legendre_table, LegendreTable};
pub use quadrature::gauss_legendre;
pub use spectral::{
    degree_spectrum, inverse_spectral_laplacian, kinetic_energy_spectrum, spectral_laplacian,
    SpectralCoeffs,
};
pub use transform::{resample, Sht};
pub use truncation::Truncation;
