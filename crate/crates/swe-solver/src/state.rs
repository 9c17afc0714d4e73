use crate::error::{Result, SweError};
use num_complex::Complex64;
use sht_core::{SpectralCoeffs, Truncation};

/// Prognostic state in spectral space: relative vorticity ζ (1/s),
/// divergence δ (1/s) and the full geopotential φ (m²/s²), plus model time.
#[derive(Debug, Clone)]
pub struct SWEState {
    pub zeta: SpectralCoeffs,
    pub delta: SpectralCoeffs,
    pub phi: SpectralCoeffs,
    pub time: f64,
}

impl SWEState {
    pub fn new(
        zeta: SpectralCoeffs,
        delta: SpectralCoeffs,
        phi: SpectralCoeffs,
        time: f64,
    ) -> Result<Self> {
        if zeta.trunc() != delta.trunc() || zeta.trunc() != phi.trunc() {
            return Err(SweError::InvalidArgument(
                "state fields must share one truncation".into(),
            ));
        }
        if zeta.channels() != 1 || delta.channels() != 1 || phi.channels() != 1 {
            return Err(SweError::InvalidArgument(
                "state fields are single-channel".into(),
            ));
        }
        let s = Self {
            zeta,
            delta,
            phi,
            time,
        };
        s.check_finite()?;
        Ok(s)
    }

    /// Motionless state with a uniform geopotential.
    pub fn rest(trunc: Truncation, phi_bar: f64) -> Self {
        let zeta = SpectralCoeffs::zeros(trunc, 1);
        let delta = SpectralCoeffs::zeros(trunc, 1);
        let mut phi = SpectralCoeffs::zeros(trunc, 1);
        // A uniform field of value c has coefficient c·√(4π) on Y_00.
        phi.set(0, 0, 0, Complex64::new(phi_bar * (4.0 * std::f64::consts::PI).sqrt(), 0.0));
        Self {
            zeta,
            delta,
            phi,
            time: 0.0,
        }
    }

    pub fn trunc(&self) -> Truncation {
        self.zeta.trunc()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (c, name) in [
            (&self.zeta, "vorticity"),
            (&self.delta, "divergence"),
            (&self.phi, "geopotential"),
        ] {
            if !c.is_finite() {
                return Err(SweError::NonFinite {
                    field: name.into(),
                    time_s: self.time,
                });
            }
        }
        Ok(())
    }
}
