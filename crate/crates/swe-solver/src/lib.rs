//! Pseudospectral shallow water equations on the rotating sphere, in
//! vorticity-divergence form, with Gaussian-random-field initialization and
//! ensemble trajectory generation. Everything is deterministic: fixed loop
//! orders, seeded RNG streams, no threading in the numerics.

mod dataset;
mod error;
mod grf;
mod planet;
mod state;
mod stepper;
mod tendency;

pub use dataset::{
    generate_dataset, snapshot_count, DatasetConfig, TrajectoryDataset, CHANNEL_NAMES,
};
pub use error::{Result, SweError};
pub use grf::{grf_initial_condition, GRFInitConfig};
pub use planet::{coriolis_field, PlanetParams, EARTH_GRAVITY};
pub use state::SWEState;
pub use stepper::SweStepper;
pub use tendency::{swe_tendency, total_energy};
