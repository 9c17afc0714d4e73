//! Multi-op building blocks assembled from tape primitives.

use crate::error::Result;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Instance normalization: standardize over the given axes (per remaining
/// index), then apply a learned affine. `gamma` and `beta` must broadcast
/// against the input, e.g. shape (C, 1, 1) for a (B, C, H, W) input reduced
/// over axes 2 and 3. Variance is the biased estimate.
pub fn instance_norm(
    tape: &mut Tape,
    x: &Tensor,
    axes: &[usize],
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let mut mean = x.clone();
    for &ax in axes {
        mean = tape.mean_axis(&mean, ax)?;
    }
    let centered = tape.sub(x, &mean)?;
    let sq = tape.mul(&centered, &centered)?;
    let mut var = sq;
    for &ax in axes {
        var = tape.mean_axis(&var, ax)?;
    }
    let shifted = tape.affine(&var, 1.0, eps)?;
    let inv_std = tape.powf(&shifted, -0.5)?;
    let normalized = tape.mul(&centered, &inv_std)?;
    let scaled = tape.mul(&normalized, gamma)?;
    tape.add(&scaled, beta)
}

/// y = x W + b for row-major tokens: x (..., p, q), w (q, r), b (r).
pub fn linear(tape: &mut Tape, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let y = tape.matmul(x, w)?;
    tape.add(&y, b)
}
