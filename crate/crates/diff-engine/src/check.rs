//! Finite-difference validation of the reverse pass.

use crate::error::{DiffError, Result};
use crate::tape::Tape;
use crate::tensor::{Tensor, TensorData};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over all input coordinates of |analytic - numeric| /
    /// max(1e-8, |analytic| + |numeric|).
    pub max_rel_err: f64,
    /// Worst relative error per input tensor.
    pub per_input: Vec<f64>,
}

/// Compare tape gradients of a scalar-valued function against central
/// differences, coordinate by coordinate.
pub fn grad_check(
    f: impl Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
    inputs: &[TensorData],
    eps: f64,
) -> Result<GradCheckReport> {
    const CENTRAL: [(f64, f64); 2] = [(0.5, 1.0), (-0.5, -1.0)];
    grad_check_stencil(f, inputs, eps, &CENTRAL)
}

/// Like [`grad_check`], but with a five-point fourth-order stencil
/// (8(f₊₁−f₋₁) − (f₊₂−f₋₂)) / 12h. Truncation error O(h⁴) permits a much
/// larger step, pushing the roundoff floor low enough to resolve the
/// smallest gradient coordinates of deep compositions.
pub fn grad_check_fourth(
    f: impl Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
    inputs: &[TensorData],
    eps: f64,
) -> Result<GradCheckReport> {
    const FOURTH: [(f64, f64); 4] = [
        (2.0 / 3.0, 1.0),
        (-2.0 / 3.0, -1.0),
        (-1.0 / 12.0, 2.0),
        (1.0 / 12.0, -2.0),
    ];
    grad_check_stencil(f, inputs, eps, &FOURTH)
}

/// Shared driver: the numeric derivative of coordinate c is
/// Σ coeff · f(x + shift·eps·e_c) / eps over the stencil taps.
fn grad_check_stencil(
    f: impl Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
    inputs: &[TensorData],
    eps: f64,
    stencil: &[(f64, f64)],
) -> Result<GradCheckReport> {
    let params: Vec<Tensor> = inputs.iter().map(|d| Tensor::param(d.clone())).collect();
    let mut tape = Tape::new();
    let loss = f(&mut tape, &params)?;
    if loss.numel() != 1 {
        return Err(DiffError::NonScalarLoss(loss.shape().to_vec()));
    }
    let grads = tape.backward(&loss)?;

    let eval = |points: &[TensorData]| -> Result<f64> {
        let frozen: Vec<Tensor> = points.iter().map(|d| Tensor::constant(d.clone())).collect();
        let mut t = Tape::disabled();
        f(&mut t, &frozen)?.item()
    };

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut max_rel = 0.0f64;
    let mut work: Vec<TensorData> = inputs.to_vec();
    for (k, (input, param)) in inputs.iter().zip(&params).enumerate() {
        let analytic = grads.get(param);
        let mut worst = 0.0f64;
        for c in 0..input.numel() {
            let orig = input.data[c];
            let mut numeric = 0.0;
            for &(coeff, shift) in stencil {
                work[k].data[c] = orig + shift * eps;
                numeric += coeff * eval(&work)?;
            }
            work[k].data[c] = orig;
            numeric /= eps;
            let a = analytic.map_or(0.0, |g| g.data[c]);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        max_rel = max_rel.max(worst);
        per_input.push(worst);
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        per_input,
    })
}
