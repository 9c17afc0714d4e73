//! Single-step supervised training over consecutive snapshot pairs.

use crate::error::{Result, TrainError};
use crate::loss::{geometric_relative_loss, latitude_weighted_l2};
use crate::optim::{AdamW, AdamWConfig, OptimState, StepOutcome};
use crate::schedule::lr_schedule;
use crate::standardize::Standardizer;
use crate::weights::{latitude_weights, MetricWeights};
use diff_engine::{Tape, Tensor, TensorData};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use shno_model::Forecaster;
use std::collections::BTreeSet;
use swe_solver::TrajectoryDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    GeometricRelative,
    LatitudeWeightedL2,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    /// Fraction of pairs held out for validation (seeded split).
    pub val_fraction: f64,
    pub loss: LossKind,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Shallow-water recipe: geometric relative loss, cosine 1e-3 → 2e-5,
    /// no warmup, batch 16, 50 epochs, 20% validation.
    pub fn swe_recipe() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            peak_lr: 1e-3,
            min_lr: 2e-5,
            warmup_epochs: 0,
            val_fraction: 0.2,
            loss: LossKind::GeometricRelative,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }

    /// Weather-style recipe: latitude-weighted L2, 6 linear warmup epochs
    /// into a cosine from 2e-4, batch 16, 20% validation.
    pub fn weather_recipe() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            peak_lr: 2e-4,
            min_lr: 0.0,
            warmup_epochs: 6,
            val_fraction: 0.2,
            loss: LossKind::LatitudeWeightedL2,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        if !(self.peak_lr > 0.0) || !(self.min_lr >= 0.0) || self.min_lr > self.peak_lr {
            return Err(TrainError::InvalidArgument(
                "learning rates must satisfy 0 <= min_lr <= peak_lr with peak_lr > 0".into(),
            ));
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(TrainError::InvalidArgument(
                "warmup must be shorter than the epoch budget".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(TrainError::InvalidArgument(
                "validation fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's (shuffled) batches.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// An optimizer step that was skipped under the non-finite-gradient policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedStep {
    pub epoch: usize,
    pub batch: usize,
    pub parameter: String,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub history: Vec<EpochStats>,
    /// Full-pass training loss before any update, same batching.
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    /// Epoch whose validation loss was best; its weights are restored into
    /// the model on return. None when there is no validation split.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub standardizer: Standardizer,
    pub train_pairs: usize,
    pub val_pairs: usize,
    /// Applied optimizer steps (skipped steps do not count).
    pub steps: u64,
    pub skipped: Vec<SkippedStep>,
    pub optim: OptimState,
}

impl FitReport {
    /// Loss history as CSV: epoch, learning rate, train loss, val loss
    /// (empty when there is no validation split).
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_loss\n");
        for e in &self.history {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.lr, e.train_loss, val));
        }
        out
    }
}

struct Batcher<'a> {
    dataset: &'a TrajectoryDataset,
    standardizer: Standardizer,
    field_len: usize,
}

impl Batcher<'_> {
    /// Build standardized (x, y) batch tensors for the given pairs.
    fn batch(&self, pairs: &[(usize, usize)]) -> Result<(Tensor, Tensor)> {
        let c = self.dataset.channels();
        let (h, w) = (self.dataset.grid.nlat(), self.dataset.grid.nlon());
        let block = c * self.field_len;
        let mut x = Vec::with_capacity(pairs.len() * block);
        let mut y = Vec::with_capacity(pairs.len() * block);
        for &(m, t) in pairs {
            x.extend_from_slice(self.dataset.snapshot(m, t));
            y.extend_from_slice(self.dataset.snapshot(m, t + 1));
        }
        self.standardizer.apply(&mut x, self.field_len)?;
        self.standardizer.apply(&mut y, self.field_len)?;
        let shape = vec![pairs.len(), c, h, w];
        Ok((
            Tensor::constant(TensorData::new(shape.clone(), x)?),
            Tensor::constant(TensorData::new(shape, y)?),
        ))
    }
}

fn batch_loss(
    tape: &mut Tape,
    kind: LossKind,
    pred: &Tensor,
    truth: &Tensor,
    weights: &MetricWeights,
) -> Result<Tensor> {
    match kind {
        LossKind::GeometricRelative => geometric_relative_loss(tape, pred, truth, weights),
        LossKind::LatitudeWeightedL2 => latitude_weighted_l2(tape, pred, truth, weights),
    }
}

/// Mean loss over `pairs` without tracking gradients.
fn eval_loss(
    model: &dyn Forecaster,
    batcher: &Batcher,
    pairs: &[(usize, usize)],
    batch_size: usize,
    kind: LossKind,
    weights: &MetricWeights,
) -> Result<f64> {
    let mut sum = 0.0;
    for chunk in pairs.chunks(batch_size) {
        let (x, y) = batcher.batch(chunk)?;
        let mut tape = Tape::disabled();
        let pred = model.forward(&mut tape, &x)?;
        let l = batch_loss(&mut tape, kind, &pred, &y, weights)?.item()?;
        sum += l * chunk.len() as f64;
    }
    Ok(sum / pairs.len() as f64)
}

/// Train `model` on consecutive-snapshot pairs (x_t, x_{t+1}) drawn within
/// members. Deterministic given the config seed: the validation split, the
/// per-epoch shuffles, the batch order and every reduction have fixed order.
/// When a validation split exists, the weights of the best-validation epoch
/// are restored into the model before returning.
pub fn fit(
    model: &mut dyn Forecaster,
    dataset: &TrajectoryDataset,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    if dataset.num_times() < 2 {
        return Err(TrainError::InvalidArgument(
            "training needs at least two snapshots per member".into(),
        ));
    }
    let mc = model.config();
    if mc.in_channels != dataset.channels() || mc.out_channels != dataset.channels() {
        return Err(TrainError::InvalidArgument(format!(
            "model maps {} -> {} channels but the dataset has {}",
            mc.in_channels,
            mc.out_channels,
            dataset.channels()
        )));
    }
    if mc.nlat != dataset.grid.nlat() || mc.nlon != dataset.grid.nlon() {
        return Err(TrainError::InvalidArgument(format!(
            "model expects a {}x{} grid but the dataset is {}x{}",
            mc.nlat,
            mc.nlon,
            dataset.grid.nlat(),
            dataset.grid.nlon()
        )));
    }

    // Seeded split into train and validation pairs.
    let mut pairs: Vec<(usize, usize)> = (0..dataset.members)
        .flat_map(|m| (0..dataset.num_times() - 1).map(move |t| (m, t)))
        .collect();
    let mut split_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    pairs.shuffle(&mut split_rng);
    let val_count = ((pairs.len() as f64 * cfg.val_fraction).round() as usize)
        .min(pairs.len().saturating_sub(1));
    let val: Vec<(usize, usize)> = pairs.split_off(pairs.len() - val_count);
    let train = pairs;

    // Standardizer from the snapshots the training pairs touch.
    let snap_ids: BTreeSet<(usize, usize)> = train
        .iter()
        .flat_map(|&(m, t)| [(m, t), (m, t + 1)])
        .collect();
    let snaps: Vec<&[f64]> = snap_ids
        .iter()
        .map(|&(m, t)| dataset.snapshot(m, t))
        .collect();
    let standardizer = Standardizer::fit(snaps.iter().copied(), dataset.channels())?;

    let weights = latitude_weights(&dataset.grid);
    let batcher = Batcher {
        dataset,
        standardizer: standardizer.clone(),
        field_len: dataset.grid.nlat() * dataset.grid.nlon(),
    };

    let initial_train_loss = eval_loss(model, &batcher, &train, cfg.batch_size, cfg.loss, &weights)?;
    let initial_val_loss = if val.is_empty() {
        None
    } else {
        Some(eval_loss(model, &batcher, &val, cfg.batch_size, cfg.loss, &weights)?)
    };

    let mut optimizer = AdamW::new(cfg.optimizer);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut skipped = Vec::new();
    let mut best: Option<(usize, f64, Vec<(String, Vec<f64>)>)> = None;

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(
            epoch,
            cfg.epochs,
            cfg.warmup_epochs,
            cfg.peak_lr,
            cfg.min_lr,
        );
        let mut order = train.clone();
        let mut epoch_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        epoch_rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut epoch_rng);

        let mut sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = batcher.batch(chunk)?;
            let mut tape = Tape::new();
            let pred = model.forward(&mut tape, &x)?;
            let loss = batch_loss(&mut tape, cfg.loss, &pred, &y, &weights)?;
            sum += loss.item()? * chunk.len() as f64;
            let grads = tape.backward(&loss)?;
            let mut params = model.named_parameters_mut();
            if let StepOutcome::SkippedNonFinite { name } =
                optimizer.step(&mut params, &grads, lr)?
            {
                skipped.push(SkippedStep {
                    epoch,
                    batch: b,
                    parameter: name,
                });
            }
        }
        let train_loss = sum / train.len() as f64;

        let val_loss = if val.is_empty() {
            None
        } else {
            let v = eval_loss(model, &batcher, &val, cfg.batch_size, cfg.loss, &weights)?;
            if best.as_ref().map_or(true, |(_, bv, _)| v < *bv) {
                let snap = model
                    .named_parameters()
                    .into_iter()
                    .map(|(n, t)| (n, t.values().to_vec()))
                    .collect();
                best = Some((epoch, v, snap));
            }
            Some(v)
        };
        history.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
    }

    let (best_epoch, best_val_loss) = match &best {
        Some((e, v, snap)) => {
            for (name, t) in model.named_parameters_mut() {
                if let Some((_, vals)) = snap.iter().find(|(n, _)| *n == name) {
                    t.values_mut().copy_from_slice(vals);
                }
            }
            (Some(*e), Some(*v))
        }
        None => (None, None),
    };

    Ok(FitReport {
        history,
        initial_train_loss,
        initial_val_loss,
        best_epoch,
        best_val_loss,
        standardizer,
        train_pairs: train.len(),
        val_pairs: val.len(),
        steps: optimizer.state().step,
        skipped,
        optim: optimizer.state().clone(),
    })
}
