//! Training and evaluation for spherical forecast models.
//!
//! The pieces, in pipeline order:
//!
//! - [`latitude_weights`] / [`MetricWeights`]: cosine-latitude and
//!   quadrature weighting shared by every loss and metric.
//! - [`geometric_relative_loss`] and [`latitude_weighted_l2`]: the two
//!   differentiable training losses, evaluated through the autodiff tape.
//! - [`AdamW`] with [`lr_schedule`]: decoupled weight decay, linear warmup
//!   into cosine annealing, and a checkpointable [`OptimState`].
//! - [`fit`]: seeded single-step supervised training on consecutive
//!   snapshot pairs with a validation split and best-weight restoration.
//! - [`evaluate_rollout`]: autoregressive verification against stored
//!   truth — RMSE, anomaly correlation, relative loss and degree spectra
//!   per lead, with a persistence baseline on the same pool.
//!
//! Everything is deterministic given the seeds: fixed split, shuffle,
//! batching and reduction orders, so repeated runs agree bitwise.

mod error;
mod eval;
mod loss;
mod metrics;
mod optim;
mod schedule;
mod standardize;
mod train;
mod weights;

pub use error::{Result, TrainError};
pub use eval::{evaluate_rollout, EvalReport, LeadMetrics, NonFiniteEvent};
pub use loss::{geometric_relative_loss, latitude_weighted_l2};
pub use metrics::{acc, climatology, relative_loss_per_variable, rmse};
pub use optim::{AdamW, AdamWConfig, NonFinitePolicy, OptimState, StepOutcome};
pub use schedule::lr_schedule;
pub use standardize::Standardizer;
pub use train::{fit, EpochStats, FitReport, LossKind, SkippedStep, TrainConfig};
pub use weights::{latitude_weights, MetricWeights};
