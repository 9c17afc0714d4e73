//! Learning-rate schedule: linear warmup, then cosine annealing.

/// Learning rate at `epoch` (0-based) out of `total_epochs`.
///
/// During warmup the rate ramps linearly, reaching `peak_lr` one epoch past
/// the ramp: epoch e < warmup gives peak·(e+1)/warmup. From `warmup_epochs`
/// on, a half-cosine decays from `peak_lr` (at e = warmup) to exactly
/// `min_lr` at the final epoch. Epochs past the end and the degenerate
/// single-cosine-epoch case clamp to `min_lr`.
pub fn lr_schedule(
    epoch: usize,
    total_epochs: usize,
    warmup_epochs: usize,
    peak_lr: f64,
    min_lr: f64,
) -> f64 {
    if epoch < warmup_epochs {
        return peak_lr * (epoch + 1) as f64 / warmup_epochs as f64;
    }
    if total_epochs == 0 || epoch >= total_epochs - 1 {
        return min_lr;
    }
    let span = total_epochs - 1 - warmup_epochs;
    if span == 0 {
        return min_lr;
    }
    let phase = (epoch - warmup_epochs) as f64 / span as f64;
    min_lr + 0.5 * (peak_lr - min_lr) * (1.0 + (std::f64::consts::PI * phase).cos())
}
