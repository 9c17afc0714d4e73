//! Right-hand side of the shallow water equations in vorticity-divergence
//! form. Nonlinear terms are evaluated on the grid (transform method); curl
//! and divergence of the fluxes are taken spectrally in the
//! integration-by-parts form, so the only grid-space operations are products.
//!
//! With η = ζ + f the absolute vorticity, F = η·(u,v), G = φ'·(u,v) and
//! E = (u²+v²)/2:
//!
//!   ∂ζ/∂t = −div F
//!   ∂δ/∂t =  curl F − ∇²(φ' + E)
//!   ∂φ/∂t = −div G − φ̄ δ
//!
//! plus −ν(−∇²)^order on each prognostic (handled exactly by the stepper,
//! added explicitly by `swe_tendency` so the public RHS is complete).

use crate::error::{Result, SweError};
use crate::planet::PlanetParams;
use crate::state::SWEState;
use sht_core::{spectral_laplacian, GridField, Sht, SpectralCoeffs};
use std::sync::Arc;

/// Grid-space maxima gathered while the RHS is evaluated; used for the CFL
/// check without extra transforms.
#[derive(Debug, Clone, Copy)]
pub struct TendencyDiagnostics {
    /// max √(u²+v²) over the grid, m/s.
    pub max_speed: f64,
    /// max of the full geopotential over the grid, m²/s².
    pub max_phi: f64,
}

pub(crate) struct Tendencies {
    pub dzeta: SpectralCoeffs,
    pub ddelta: SpectralCoeffs,
    pub dphi: SpectralCoeffs,
}

fn ensure_finite(values: &[f64], field: &str, time_s: f64) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SweError::NonFinite {
            field: field.into(),
            time_s,
        })
    }
}

/// Nonlinear (advective + pressure) part of the RHS, without dissipation.
pub(crate) fn nonlinear_tendency(
    sht: &Sht,
    state: &SWEState,
    planet: &PlanetParams,
) -> Result<(Tendencies, TendencyDiagnostics)> {
    let grid = Arc::clone(sht.grid());
    let (nlat, nlon) = (grid.nlat(), grid.nlon());
    let a = grid.radius();
    let t = state.time;

    let (u, v) = sht.uv_from_vortdiv(&state.zeta, &state.delta)?;
    let zeta_grid = sht.inverse(&state.zeta)?;
    let phi_grid = sht.inverse(&state.phi)?;
    ensure_finite(u.values(), "zonal wind", t)?;
    ensure_finite(v.values(), "meridional wind", t)?;
    ensure_finite(phi_grid.values(), "geopotential", t)?;

    let phi_bar = planet.mean_geopotential;
    let mut flux_zu = GridField::zeros(Arc::clone(&grid), 1);
    let mut flux_zv = GridField::zeros(Arc::clone(&grid), 1);
    let mut flux_pu = GridField::zeros(Arc::clone(&grid), 1);
    let mut flux_pv = GridField::zeros(Arc::clone(&grid), 1);
    let mut bern = GridField::zeros(Arc::clone(&grid), 1);
    let mut max_speed2 = 0.0f64;
    let mut max_phi = f64::NEG_INFINITY;
    for i in 0..nlat {
        let f_cor = 2.0 * planet.rotation_rate * grid.lats_rad()[i].sin();
        for j in 0..nlon {
            let k = i * nlon + j;
            let (uk, vk) = (u.values()[k], v.values()[k]);
            let eta = zeta_grid.values()[k] + f_cor;
            let phip = phi_grid.values()[k] - phi_bar;
            flux_zu.values_mut()[k] = eta * uk;
            flux_zv.values_mut()[k] = eta * vk;
            flux_pu.values_mut()[k] = phip * uk;
            flux_pv.values_mut()[k] = phip * vk;
            let speed2 = uk * uk + vk * vk;
            bern.values_mut()[k] = phip + 0.5 * speed2;
            max_speed2 = max_speed2.max(speed2);
            max_phi = max_phi.max(phi_grid.values()[k]);
        }
    }
    ensure_finite(flux_zu.values(), "vorticity flux", t)?;
    ensure_finite(flux_zv.values(), "vorticity flux", t)?;
    ensure_finite(flux_pu.values(), "geopotential flux", t)?;
    ensure_finite(flux_pv.values(), "geopotential flux", t)?;
    ensure_finite(bern.values(), "kinetic energy", t)?;

    let (curl_f, div_f) = sht.vortdiv_from_uv(&flux_zu, &flux_zv)?;
    let (_, div_g) = sht.vortdiv_from_uv(&flux_pu, &flux_pv)?;
    let bern_spec = sht.forward(&bern)?;
    let lap_bern = spectral_laplacian(&bern_spec, a);

    let mut dzeta = div_f;
    dzeta.scale(-1.0);
    let mut ddelta = curl_f;
    ddelta.axpy(-1.0, &lap_bern)?;
    let mut dphi = div_g;
    dphi.scale(-1.0);
    dphi.axpy(-phi_bar, &state.delta)?;

    Ok((
        Tendencies {
            dzeta,
            ddelta,
            dphi,
        },
        TendencyDiagnostics {
            max_speed: max_speed2.sqrt(),
            max_phi,
        },
    ))
}

/// Full spectral RHS: nonlinear terms plus per-mode hyperdiffusion.
pub fn swe_tendency(
    sht: &Sht,
    state: &SWEState,
    planet: &PlanetParams,
) -> Result<(SpectralCoeffs, SpectralCoeffs, SpectralCoeffs)> {
    planet.validate()?;
    let (mut tend, _) = nonlinear_tendency(sht, state, planet)?;
    if planet.hyperdiffusion_coeff > 0.0 {
        for (dst, src) in [
            (&mut tend.dzeta, &state.zeta),
            (&mut tend.ddelta, &state.delta),
            (&mut tend.dphi, &state.phi),
        ] {
            let mut damp = src.clone();
            damp.scale_per_degree(|n| -planet.hyperdiffusion_rate(n));
            dst.add_assign(&damp)?;
        }
    }
    Ok((tend.dzeta, tend.ddelta, tend.dphi))
}

/// Total energy diagnostic ∬ [½φ(u²+v²) + ½φ²] a²dΩ (an invariant of the
/// inviscid equations up to time discretization error).
pub fn total_energy(sht: &Sht, state: &SWEState) -> Result<f64> {
    let grid = sht.grid();
    let (nlat, nlon) = (grid.nlat(), grid.nlon());
    let (u, v) = sht.uv_from_vortdiv(&state.zeta, &state.delta)?;
    let phi = sht.inverse(&state.phi)?;
    let a2 = grid.radius() * grid.radius();
    let mut e = 0.0;
    for i in 0..nlat {
        let w = grid.area_weight(i);
        for j in 0..nlon {
            let k = i * nlon + j;
            let (uk, vk, pk) = (u.values()[k], v.values()[k], phi.values()[k]);
            e += w * (0.5 * pk * (uk * uk + vk * vk) + 0.5 * pk * pk);
        }
    }
    Ok(e * a2)
}
