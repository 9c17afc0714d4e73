//! Explicit third-order Adams–Bashforth time stepping with the linear
//! hyperdiffusion integrated exactly per mode (integrating factor). The first
//! two steps, where no tendency history exists yet, use an
//! integrating-factor SSP-RK3 of the same order.

use crate::error::{Result, SweError};
use crate::planet::PlanetParams;
use crate::state::SWEState;
use crate::tendency::{nonlinear_tendency, Tendencies};
use sht_core::{Sht, SpectralCoeffs};
use std::collections::VecDeque;

const DEFAULT_CFL_SAFETY: f64 = 0.7;

pub struct SweStepper<'a> {
    sht: &'a Sht,
    planet: PlanetParams,
    dt: f64,
    cfl_safety: f64,
    // Per-degree integrating factors e^{-γ_n·τ} for the τ each scheme needs.
    e_dt: Vec<f64>,
    e_2dt: Vec<f64>,
    e_3dt: Vec<f64>,
    e_half: Vec<f64>,
    e_neg_half: Vec<f64>,
    // Nonlinear tendencies of the two previous completed steps, newest first.
    hist: VecDeque<Tendencies>,
}

/// out = Σ_j coef_j · (table_j ∘ x_j), where ∘ scales per spherical degree.
fn lincomb(terms: &[(f64, &[f64], &SpectralCoeffs)]) -> Result<SpectralCoeffs> {
    let mut out = SpectralCoeffs::zeros(terms[0].2.trunc(), terms[0].2.channels());
    for &(coef, table, x) in terms {
        let mut t = x.clone();
        t.scale_per_degree(|n| coef * table[n]);
        out.add_assign(&t)?;
    }
    Ok(out)
}

impl<'a> SweStepper<'a> {
    pub fn new(sht: &'a Sht, planet: PlanetParams, dt: f64) -> Result<Self> {
        planet.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SweError::InvalidArgument(
                "time step must be positive and finite".into(),
            ));
        }
        let table = |tau: f64| -> Vec<f64> {
            (0..=sht.trunc().n_max())
                .map(|n| (-planet.hyperdiffusion_rate(n) * tau).exp())
                .collect()
        };
        Ok(Self {
            sht,
            planet,
            dt,
            cfl_safety: DEFAULT_CFL_SAFETY,
            e_dt: table(dt),
            e_2dt: table(2.0 * dt),
            e_3dt: table(3.0 * dt),
            e_half: table(0.5 * dt),
            e_neg_half: table(-0.5 * dt),
            hist: VecDeque::new(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn planet(&self) -> &PlanetParams {
        &self.planet
    }

    /// Forget tendency history (restart the AB3 bootstrap), e.g. when the
    /// state is replaced rather than advanced.
    pub fn reset(&mut self) {
        self.hist.clear();
    }

    /// Advance one step of length dt. Errors on a CFL violation or a
    /// nonfinite state.
    pub fn step(&mut self, state: &SWEState) -> Result<SWEState> {
        state.check_finite()?;
        let (n_k, diag) = nonlinear_tendency(self.sht, state, &self.planet)?;
        let wave_speed = diag.max_speed + diag.max_phi.max(0.0).sqrt();
        let limit = self.cfl_safety * self.sht.grid().radius()
            / (wave_speed * (self.sht.trunc().n_max() + 1) as f64);
        if self.dt > limit {
            return Err(SweError::CflViolation {
                dt: self.dt,
                limit,
                time_s: state.time,
            });
        }
        let next = if self.hist.len() < 2 {
            self.rk3_step(state, &n_k)?
        } else {
            self.ab3_step(state, &n_k)?
        };
        self.hist.push_front(n_k);
        self.hist.truncate(2);
        next.check_finite()?;
        Ok(next)
    }

    fn ab3_step(&self, s: &SWEState, n_k: &Tendencies) -> Result<SWEState> {
        let dt = self.dt;
        let (n_k1, n_k2) = (&self.hist[0], &self.hist[1]);
        let field = |x0: &SpectralCoeffs,
                     nk: &SpectralCoeffs,
                     nk1: &SpectralCoeffs,
                     nk2: &SpectralCoeffs| {
            lincomb(&[
                (1.0, &self.e_dt, x0),
                (23.0 / 12.0 * dt, &self.e_dt, nk),
                (-16.0 / 12.0 * dt, &self.e_2dt, nk1),
                (5.0 / 12.0 * dt, &self.e_3dt, nk2),
            ])
        };
        SWEState::new(
            field(&s.zeta, &n_k.dzeta, &n_k1.dzeta, &n_k2.dzeta)?,
            field(&s.delta, &n_k.ddelta, &n_k1.ddelta, &n_k2.ddelta)?,
            field(&s.phi, &n_k.dphi, &n_k1.dphi, &n_k2.dphi)?,
            s.time + dt,
        )
    }

    /// Integrating-factor Shu–Osher SSP-RK3 for the bootstrap steps.
    fn rk3_step(&self, s: &SWEState, n0: &Tendencies) -> Result<SWEState> {
        let dt = self.dt;
        let stage = |a: f64,
                     ta: &[f64],
                     xa: &SpectralCoeffs,
                     b: f64,
                     tb: &[f64],
                     xb: &SpectralCoeffs,
                     nb: &SpectralCoeffs|
         -> Result<SpectralCoeffs> {
            lincomb(&[(a, ta, xa), (b, tb, xb), (b * dt, tb, nb)])
        };
        // X1 = E(dt)·(X0 + dt·N0), a first-order guess at t+dt.
        let x1 = SWEState::new(
            lincomb(&[(1.0, &self.e_dt, &s.zeta), (dt, &self.e_dt, &n0.dzeta)])?,
            lincomb(&[(1.0, &self.e_dt, &s.delta), (dt, &self.e_dt, &n0.ddelta)])?,
            lincomb(&[(1.0, &self.e_dt, &s.phi), (dt, &self.e_dt, &n0.dphi)])?,
            s.time + dt,
        )?;
        let (n1, _) = nonlinear_tendency(self.sht, &x1, &self.planet)?;
        // X2 = 3/4·E(dt/2)·X0 + 1/4·E(-dt/2)·(X1 + dt·N1), at t+dt/2.
        let x2 = SWEState::new(
            stage(0.75, &self.e_half, &s.zeta, 0.25, &self.e_neg_half, &x1.zeta, &n1.dzeta)?,
            stage(0.75, &self.e_half, &s.delta, 0.25, &self.e_neg_half, &x1.delta, &n1.ddelta)?,
            stage(0.75, &self.e_half, &s.phi, 0.25, &self.e_neg_half, &x1.phi, &n1.dphi)?,
            s.time + 0.5 * dt,
        )?;
        let (n2, _) = nonlinear_tendency(self.sht, &x2, &self.planet)?;
        // X⁺ = 1/3·E(dt)·X0 + 2/3·E(dt/2)·(X2 + dt·N2).
        let third = 1.0 / 3.0;
        SWEState::new(
            stage(third, &self.e_dt, &s.zeta, 2.0 * third, &self.e_half, &x2.zeta, &n2.dzeta)?,
            stage(third, &self.e_dt, &s.delta, 2.0 * third, &self.e_half, &x2.delta, &n2.ddelta)?,
            stage(third, &self.e_dt, &s.phi, 2.0 * third, &self.e_half, &x2.phi, &n2.dphi)?,
            s.time + dt,
        )
    }
}
