//! Trajectory dataset generation: run an ensemble of independently
//! initialized simulations, discard the spin-up interval, and store snapshots
//! of geopotential and winds, spectrally resampled to the output grid.

use crate::error::{Result, SweError};
use crate::grf::{grf_initial_condition, GRFInitConfig};
use crate::planet::PlanetParams;
use crate::stepper::SweStepper;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sht_core::{resample, GridField, Sht, SphericalGrid};
use std::sync::Arc;

pub const CHANNEL_NAMES: [&str; 3] = ["Z", "U", "V"];

/// Snapshots laid out as (member, time, channel, lat, lon), row-major.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub grid: Arc<SphericalGrid>,
    pub channel_names: Vec<String>,
    pub data: Vec<f64>,
    pub members: usize,
    /// Snapshot times in seconds since the start of each run.
    pub times_s: Vec<f64>,
    pub snapshot_interval_s: f64,
}

impl TrajectoryDataset {
    pub fn num_times(&self) -> usize {
        self.times_s.len()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    /// One (channel, lat, lon) block.
    pub fn snapshot(&self, member: usize, time_idx: usize) -> &[f64] {
        let block = self.channels() * self.grid.nlat() * self.grid.nlon();
        let start = (member * self.num_times() + time_idx) * block;
        &self.data[start..start + block]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetConfig {
    pub members: usize,
    pub sim_hours: f64,
    pub spinup_hours: f64,
    pub snapshot_interval_hours: f64,
    /// Solver time step, seconds. Must divide the spin-up and the snapshot
    /// interval.
    pub dt_s: f64,
}

fn exact_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    if (r - r.round()).abs() > 1e-9 * r.abs().max(1.0) || r.round() < 0.0 {
        return Err(SweError::InvalidArgument(format!(
            "{what}: {num} is not a whole multiple of {den}"
        )));
    }
    Ok(r.round() as usize)
}

/// Number of retained snapshots: one at the end of spin-up, then one per
/// interval through sim_hours inclusive.
pub fn snapshot_count(sim_hours: f64, spinup_hours: f64, interval_hours: f64) -> Result<usize> {
    if !(sim_hours > spinup_hours) {
        return Err(SweError::InvalidArgument(
            "simulated hours must exceed the spin-up".into(),
        ));
    }
    if !(interval_hours > 0.0) {
        return Err(SweError::InvalidArgument(
            "snapshot interval must be positive".into(),
        ));
    }
    Ok(exact_ratio(
        sim_hours - spinup_hours,
        interval_hours,
        "snapshot schedule",
    )? + 1)
}

/// Run the ensemble and collect the dataset. Member i draws its initial
/// condition from an independent RNG stream of the master seed, so the
/// result is bitwise reproducible and independent of how members are
/// scheduled. The mass-equation reference φ̄ is the sampled initial global
/// mean, i.e. cfg.phi_avg.
pub fn generate_dataset(
    ds: &DatasetConfig,
    grf: &GRFInitConfig,
    planet: &PlanetParams,
    solver: &Sht,
    output: &Sht,
) -> Result<TrajectoryDataset> {
    planet.validate()?;
    if ds.members == 0 {
        return Err(SweError::InvalidArgument("need at least one member".into()));
    }
    let (sg, og) = (solver.grid(), output.grid());
    if og.nlat() > sg.nlat() || og.nlon() > sg.nlon() {
        return Err(SweError::InvalidArgument(
            "output grid must not exceed the solver grid".into(),
        ));
    }
    if og.radius() != sg.radius() {
        return Err(SweError::InvalidArgument(
            "solver and output grids must share the radius".into(),
        ));
    }
    let n_snaps = snapshot_count(ds.sim_hours, ds.spinup_hours, ds.snapshot_interval_hours)?;
    let spin_steps = exact_ratio(ds.spinup_hours * 3600.0, ds.dt_s, "spin-up")?;
    let interval_steps = exact_ratio(ds.snapshot_interval_hours * 3600.0, ds.dt_s, "interval")?;
    if interval_steps == 0 {
        return Err(SweError::InvalidArgument(
            "snapshot interval must be at least one step".into(),
        ));
    }
    let total_steps = spin_steps + (n_snaps - 1) * interval_steps;

    let planet = PlanetParams {
        mean_geopotential: grf.phi_avg,
        ..*planet
    };
    let block = 3 * og.nlat() * og.nlon();
    let mut data = vec![0.0f64; ds.members * n_snaps * block];
    let mut times_s = Vec::new();

    for member in 0..ds.members {
        let mut run = || -> Result<()> {
            let mut seeder = ChaCha12Rng::seed_from_u64(grf.seed);
            seeder.set_stream(member as u64 + 1);
            let member_cfg = GRFInitConfig {
                seed: seeder.gen(),
                ..*grf
            };
            let mut state = grf_initial_condition(&member_cfg, solver)?;
            let mut stepper = SweStepper::new(solver, planet, ds.dt_s)?;
            let mut snap_idx = 0usize;
            for k in 0..=total_steps {
                if k >= spin_steps && (k - spin_steps) % interval_steps == 0 {
                    let snap = snapshot_fields(solver, output, &state)?;
                    let start = (member * n_snaps + snap_idx) * block;
                    data[start..start + block].copy_from_slice(snap.values());
                    if member == 0 {
                        times_s.push(state.time);
                    }
                    snap_idx += 1;
                }
                if k < total_steps {
                    state = stepper.step(&state)?;
                }
            }
            debug_assert_eq!(snap_idx, n_snaps);
            Ok(())
        };
        run().map_err(|e| SweError::MemberFailed {
            member,
            source: Box::new(e),
        })?;
    }

    Ok(TrajectoryDataset {
        grid: Arc::clone(og),
        channel_names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        data,
        members: ds.members,
        times_s,
        snapshot_interval_s: ds.snapshot_interval_hours * 3600.0,
    })
}

/// Synthesize (Z, U, V) on the solver grid and resample each channel as a
/// scalar to the output grid.
fn snapshot_fields(solver: &Sht, output: &Sht, state: &crate::state::SWEState) -> Result<GridField> {
    let z = solver.inverse(&state.phi)?;
    let (u, v) = solver.uv_from_vortdiv(&state.zeta, &state.delta)?;
    let sg = solver.grid();
    let mut full = Vec::with_capacity(3 * sg.nlat() * sg.nlon());
    full.extend_from_slice(z.values());
    full.extend_from_slice(u.values());
    full.extend_from_slice(v.values());
    let stacked = GridField::from_values(Arc::clone(sg), 3, full)?;
    Ok(resample(&stacked, solver, output)?)
}
