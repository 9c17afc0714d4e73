//! Physics oracles: closed-form steady states, conservation laws, and the
//! formal order of the time integrator.

use num_complex::Complex64;
use sht_core::{Sht, SphericalGrid, SpectralCoeffs, Truncation};
use std::sync::Arc;
use swe_solver::{
    coriolis_field, grf_initial_condition, swe_tendency, total_energy, GRFInitConfig,
    PlanetParams, SWEState, SweError, SweStepper,
};

const SQRT_4PI: f64 = 3.544_907_701_811_032;

fn plan(nlat: usize, nlon: usize) -> Sht {
    let grid = Arc::new(SphericalGrid::gaussian(nlat, nlon, 6.371e6).unwrap());
    let trunc = Truncation::for_quadratic_grid(nlat).unwrap();
    Sht::new(grid, trunc).unwrap()
}

fn inviscid_earth(phi_bar: f64) -> PlanetParams {
    PlanetParams {
        mean_geopotential: phi_bar,
        hyperdiffusion_coeff: 0.0,
        ..PlanetParams::earth()
    }
}

#[test]
fn coriolis_matches_closed_form() {
    let omega = 7.292e-5;
    // Odd nlat puts a node exactly on the equator.
    let grid = Arc::new(SphericalGrid::gaussian(33, 64, 6.371e6).unwrap());
    let f = coriolis_field(&grid, omega);
    for i in 0..33 {
        for j in 0..64 {
            assert_eq!(f.value(0, i, j), 2.0 * omega * grid.lats_rad()[i].sin());
        }
    }
    // Equator row is exactly zero.
    assert_eq!(f.value(0, 16, 0), 0.0);
    // Odd in latitude, bitwise, thanks to the mirrored nodes.
    for i in 0..33 {
        assert_eq!(f.value(0, i, 0), -f.value(0, 32 - i, 0));
    }
    // Approaches ±2Ω toward the poles from below.
    let top = (0..33).map(|i| f.value(0, i, 0)).fold(f64::MIN, f64::max);
    assert!(top > 0.9 * 2.0 * omega && top < 2.0 * omega);
}

#[test]
fn rest_state_tendencies_vanish() {
    let sht = plan(32, 64);
    let phi_bar = 9806.16;
    let state = SWEState::rest(sht.trunc(), phi_bar);
    let (dz, dd, dp) = swe_tendency(&sht, &state, &PlanetParams::earth()).unwrap();
    for c in [&dz, &dd, &dp] {
        let max = c.data().iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        assert!(max < 1e-13, "rest tendency {max:e}");
    }
}

#[test]
fn rest_state_is_fixed_point_over_1000_steps() {
    let sht = plan(32, 64);
    let phi_bar = 9806.16;
    let mut state = SWEState::rest(sht.trunc(), phi_bar);
    let mut stepper = SweStepper::new(&sht, PlanetParams::earth(), 600.0).unwrap();
    for _ in 0..1000 {
        state = stepper.step(&state).unwrap();
    }
    let phi = sht.inverse(&state.phi).unwrap();
    let (u, v) = sht.uv_from_vortdiv(&state.zeta, &state.delta).unwrap();
    for k in 0..32 * 64 {
        assert!((phi.values()[k] - phi_bar).abs() < 1e-11 * phi_bar);
        assert!(u.values()[k].abs() < 1e-11);
        assert!(v.values()[k].abs() < 1e-11);
    }
}

/// Solid-body zonal flow u = U₀·cos(lat) with the geopotential that balances
/// it. The balance relation dφ/dμ = −2Kμ, K = aΩU₀ + U₀²/2, integrates to
/// φ = φ₀ − K·μ², which lives entirely in the Y₀₀ and Y₂₀ modes:
/// μ² = 1/3 + (2/3)·√(4π/5)·P̄₂₀.
#[test]
fn balanced_zonal_flow_is_steady() {
    let sht = plan(64, 128);
    let (a, omega) = (6.371e6, 7.292e-5);
    let u0 = 38.6;
    let k = a * omega * u0 + 0.5 * u0 * u0;
    let phi0 = 2.94e4;

    let mut zeta = SpectralCoeffs::zeros(sht.trunc(), 1);
    zeta.set(0, 1, 0, Complex64::new(2.0 * u0 / a * (4.0 * std::f64::consts::PI / 3.0).sqrt(), 0.0));
    let delta = SpectralCoeffs::zeros(sht.trunc(), 1);
    let mut phi = SpectralCoeffs::zeros(sht.trunc(), 1);
    phi.set(0, 0, 0, Complex64::new((phi0 - k / 3.0) * SQRT_4PI, 0.0));
    phi.set(0, 2, 0, Complex64::new(-k * (2.0 / 3.0) * (4.0 * std::f64::consts::PI / 5.0).sqrt(), 0.0));

    let planet = inviscid_earth(phi0 - k / 3.0);
    let state = SWEState::new(zeta, delta, phi, 0.0).unwrap();
    let (dz, dd, dp) = swe_tendency(&sht, &state, &planet).unwrap();

    let dp_grid = sht.inverse(&dp).unwrap();
    let phi_grid = sht.inverse(&state.phi).unwrap();
    let phi_scale = phi_grid.values().iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let dp_max = dp_grid.values().iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    assert!(dp_max < 1e-6 * phi_scale, "dphi {dp_max:e} vs scale {phi_scale:e}");

    // The actual balance lives in the divergence equation: the curl of the
    // absolute-vorticity flux must cancel ∇²(φ' + E). Compare the residual
    // against the size of either term alone.
    let lap_scale = 6.0 / (a * a) * k; // |∇² of the μ² part| ~ n(n+1)/a²·K at n=2
    let dd_grid = sht.inverse(&dd).unwrap();
    let dd_max = dd_grid.values().iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    assert!(dd_max < 1e-6 * lap_scale, "ddelta {dd_max:e} vs {lap_scale:e}");
    let dz_grid = sht.inverse(&dz).unwrap();
    let dz_max = dz_grid.values().iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    assert!(dz_max < 1e-6 * lap_scale, "dzeta {dz_max:e}");
}

#[test]
fn dphi_global_mean_vanishes_for_random_state() {
    let sht = plan(64, 128);
    let cfg = GRFInitConfig {
        seed: 7,
        ..Default::default()
    };
    let state = grf_initial_condition(&cfg, &sht).unwrap();
    let (_, _, dp) = swe_tendency(&sht, &state, &PlanetParams::earth()).unwrap();
    assert!(dp.get(0, 0, 0).norm() < 1e-13);
}

#[test]
fn mass_conserved_over_1000_inviscid_steps() {
    let sht = plan(48, 96);
    let cfg = GRFInitConfig {
        phi_std: 300.0,
        wind_std: 8.0,
        seed: 3,
        ..Default::default()
    };
    let planet = inviscid_earth(cfg.phi_avg);
    let mut state = grf_initial_condition(&cfg, &sht).unwrap();
    let c00_initial = state.phi.get(0, 0, 0).re;
    let mut stepper = SweStepper::new(&sht, planet, 450.0).unwrap();
    for _ in 0..1000 {
        state = stepper.step(&state).unwrap();
    }
    let drift = (state.phi.get(0, 0, 0).re - c00_initial).abs() / c00_initial.abs();
    assert!(drift < 1e-10, "relative mass drift {drift:e}");
}

/// Richardson study: integrate a fixed smooth state to T with dt, dt/2, dt/4
/// and compare against a small-dt reference. AB3 (with its RK3 bootstrap) is
/// third order, so halving dt should cut the error by ~8.
#[test]
fn ab3_converges_at_third_order() {
    let sht = plan(64, 128);
    let cfg = GRFInitConfig {
        seed: 11,
        ..Default::default()
    };
    let planet = inviscid_earth(cfg.phi_avg);
    let initial = grf_initial_condition(&cfg, &sht).unwrap();

    let t_final = 2400.0;
    let run = |dt: f64| -> SpectralCoeffs {
        let mut stepper = SweStepper::new(&sht, planet, dt).unwrap();
        let mut s = initial.clone();
        let steps = (t_final / dt).round() as usize;
        for _ in 0..steps {
            s = stepper.step(&s).unwrap();
        }
        s.phi
    };
    let reference = run(t_final / 256.0);
    let err = |phi: &SpectralCoeffs| -> f64 {
        phi.data()
            .iter()
            .zip(reference.data())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let e1 = err(&run(300.0));
    let e2 = err(&run(150.0));
    let e3 = err(&run(75.0));
    let p12 = (e1 / e2).log2();
    let p23 = (e2 / e3).log2();
    assert!(
        p12 >= 2.7 && p23 >= 2.7,
        "observed orders {p12:.2}, {p23:.2} (errors {e1:e}, {e2:e}, {e3:e})"
    );
}

#[test]
fn inviscid_energy_drift_below_half_percent_over_24h() {
    let sht = plan(128, 256);
    let cfg = GRFInitConfig {
        wind_std: 15.0,
        seed: 19,
        ..Default::default()
    };
    let planet = inviscid_earth(cfg.phi_avg);
    let mut state = grf_initial_condition(&cfg, &sht).unwrap();
    let e0 = total_energy(&sht, &state).unwrap();
    let mut stepper = SweStepper::new(&sht, planet, 240.0).unwrap();
    for _ in 0..360 {
        state = stepper.step(&state).unwrap();
    }
    let e1 = total_energy(&sht, &state).unwrap();
    let drift = ((e1 - e0) / e0).abs();
    assert!(drift < 5e-3, "energy drift {:.4}%", 100.0 * drift);
}

#[test]
fn oversized_dt_is_rejected() {
    let sht = plan(32, 64);
    let cfg = GRFInitConfig::default();
    let state = grf_initial_condition(&cfg, &sht).unwrap();
    let mut stepper = SweStepper::new(&sht, PlanetParams::earth(), 1e5).unwrap();
    match stepper.step(&state) {
        Err(SweError::CflViolation { dt, limit, .. }) => {
            assert_eq!(dt, 1e5);
            assert!(limit < 1e5);
        }
        other => panic!("expected CFL violation, got {other:?}"),
    }
}

#[test]
fn grf_zero_stds_give_rest_state() {
    let sht = plan(32, 64);
    let cfg = GRFInitConfig {
        phi_std: 0.0,
        wind_std: 0.0,
        seed: 42,
        ..Default::default()
    };
    let state = grf_initial_condition(&cfg, &sht).unwrap();
    assert!(state.zeta.data().iter().all(|c| c.norm() == 0.0));
    assert!(state.delta.data().iter().all(|c| c.norm() == 0.0));
    for (k, c) in state.phi.data().iter().enumerate() {
        if k == 0 {
            assert!((c.re - cfg.phi_avg * SQRT_4PI).abs() < 1e-9);
        } else {
            assert_eq!(c.norm(), 0.0);
        }
    }
}

#[test]
fn grf_grid_std_hits_target() {
    let sht = plan(64, 128);
    for seed in 0..32u64 {
        let cfg = GRFInitConfig {
            seed,
            ..Default::default()
        };
        let state = grf_initial_condition(&cfg, &sht).unwrap();
        let phi = sht.inverse(&state.phi).unwrap();
        let mean = phi.area_mean(0);
        let grid = sht.grid();
        let mut var = 0.0;
        for i in 0..grid.nlat() {
            for j in 0..grid.nlon() {
                let d = phi.value(0, i, j) - mean;
                var += grid.area_weight(i) * d * d;
            }
        }
        let std = (var / (4.0 * std::f64::consts::PI)).sqrt();
        assert!(
            (std - cfg.phi_std).abs() < 0.02 * cfg.phi_std,
            "seed {seed}: std {std} vs {}",
            cfg.phi_std
        );
        assert!((mean - cfg.phi_avg).abs() < 1e-9 * cfg.phi_avg);
    }
}

#[test]
fn grf_is_deterministic_in_the_seed() {
    let sht = plan(48, 96);
    let cfg = GRFInitConfig {
        seed: 1234,
        ..Default::default()
    };
    let a = grf_initial_condition(&cfg, &sht).unwrap();
    let b = grf_initial_condition(&cfg, &sht).unwrap();
    assert_eq!(a.zeta.data(), b.zeta.data());
    assert_eq!(a.delta.data(), b.delta.data());
    assert_eq!(a.phi.data(), b.phi.data());
    let other = grf_initial_condition(
        &GRFInitConfig {
            seed: 1235,
            ..cfg
        },
        &sht,
    )
    .unwrap();
    assert_ne!(a.phi.data(), other.phi.data());
}
