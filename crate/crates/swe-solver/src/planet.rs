use crate::error::{Result, SweError};
use sht_core::{GridField, SphericalGrid};
use std::sync::Arc;

/// Standard gravity, m/s². Used by presets that express geopotential scales
/// as multiples of g.
pub const EARTH_GRAVITY: f64 = 9.80616;

/// Physical parameters of the rotating sphere and of the dissipation.
#[derive(Debug, Clone, Copy)]
pub struct PlanetParams {
    /// Sphere radius a, meters.
    pub radius: f64,
    /// Rotation rate Ω, rad/s.
    pub rotation_rate: f64,
    /// Reference (resting-layer mean) geopotential φ̄, m²/s². The mass
    /// equation is integrated for the perturbation about this value.
    pub mean_geopotential: f64,
    /// Hyperdiffusion coefficient ν, m^(4·order)/s... for order k the term is
    /// −ν(−∇²)^k, i.e. units m^(2k)/s.
    pub hyperdiffusion_coeff: f64,
    /// Power of the Laplacian in the dissipation (2 ⇒ ∇⁴).
    pub hyperdiffusion_order: u32,
}

impl PlanetParams {
    /// Earth constants with a 1000·g resting layer and mild ∇⁴ damping.
    pub fn earth() -> Self {
        Self {
            radius: 6.371e6,
            rotation_rate: 7.292e-5,
            mean_geopotential: 1.0e3 * EARTH_GRAVITY,
            hyperdiffusion_coeff: 1.0e16,
            hyperdiffusion_order: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(SweError::InvalidArgument("radius must be positive".into()));
        }
        if !(self.rotation_rate >= 0.0) {
            return Err(SweError::InvalidArgument(
                "rotation rate must be nonnegative".into(),
            ));
        }
        if !(self.mean_geopotential > 0.0) {
            return Err(SweError::InvalidArgument(
                "mean geopotential must be positive".into(),
            ));
        }
        if !(self.hyperdiffusion_coeff >= 0.0) {
            return Err(SweError::InvalidArgument(
                "hyperdiffusion coefficient must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Spectral damping rate γ_n = ν·(n(n+1)/a²)^order, 1/s. Zero at n = 0,
    /// so the global mean is never touched.
    pub fn hyperdiffusion_rate(&self, n: usize) -> f64 {
        let lap = (n * (n + 1)) as f64 / (self.radius * self.radius);
        self.hyperdiffusion_coeff * lap.powi(self.hyperdiffusion_order as i32)
    }
}

/// Coriolis parameter f = 2Ω·sin(lat) sampled on the grid.
pub fn coriolis_field(grid: &Arc<SphericalGrid>, rotation_rate: f64) -> GridField {
    GridField::from_fn(Arc::clone(grid), |lat, _lon| 2.0 * rotation_rate * lat.sin())
}
