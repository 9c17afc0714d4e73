//! Smooth maximum unit. φ(x) = ½[(1+a)x + (1−a)x·erf(μ(1−a)x)] with the
//! sharpness a fixed at 0.25 and μ learnable. Behaves like a leaky, smooth
//! ReLU: slope 1 for large positive x, slope a for large negative x.

use crate::error::Result;
use diff_engine::{CTensor, Tape, Tensor};

pub const SMU_ALPHA: f64 = 0.25;

/// Componentwise SMU on a real tensor. `mu` is a scalar (or broadcastable)
/// tensor so its gradient is tracked.
pub fn smu(tape: &mut Tape, x: &Tensor, mu: &Tensor) -> Result<Tensor> {
    let a = SMU_ALPHA;
    let scaled = tape.mul(x, mu)?;
    let inner = tape.affine(&scaled, 1.0 - a, 0.0)?;
    let e = tape.erf(&inner)?;
    let xe = tape.mul(x, &e)?;
    let linear = tape.affine(x, 0.5 * (1.0 + a), 0.0)?;
    let curved = tape.affine(&xe, 0.5 * (1.0 - a), 0.0)?;
    Ok(tape.add(&linear, &curved)?)
}

/// SMU applied separately to real and imaginary parts.
pub fn smu_c(tape: &mut Tape, z: &CTensor, mu: &Tensor) -> Result<CTensor> {
    Ok(CTensor {
        re: smu(tape, &z.re, mu)?,
        im: smu(tape, &z.im, mu)?,
    })
}
