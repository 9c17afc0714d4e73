//! Shared building blocks: parameter initializers, pointwise channel maps,
//! and instance normalization over the grid axes.

use crate::error::Result;
use diff_engine::{instance_norm, Tape, Tensor, TensorData};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) const INIT_STD: f64 = 0.02;

pub(crate) fn normal_param(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::param(TensorData::new(shape.to_vec(), data).unwrap())
}

pub(crate) fn zeros_param(shape: &[usize]) -> Tensor {
    Tensor::param(TensorData::zeros(shape))
}

pub(crate) fn full_param(shape: &[usize], v: f64) -> Tensor {
    Tensor::param(TensorData::full(shape, v))
}

pub(crate) fn identity_param(c: usize) -> Tensor {
    let mut data = vec![0.0; c * c];
    for i in 0..c {
        data[i * c + i] = 1.0;
    }
    Tensor::param(TensorData::new(vec![c, c], data).unwrap())
}

/// Apply a (Cin, Cout) channel matrix pointwise on a (B, Cin, H, W) latent.
pub fn channel_map(tape: &mut Tape, x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (b, c, h, wd) = dims4(x);
    let flat = tape.reshape(x, &[b, c, h * wd])?;
    let tokens = tape.transpose_last(&flat)?;
    let mapped = tape.matmul(&tokens, w)?;
    let back = tape.transpose_last(&mapped)?;
    let cout = w.shape()[1];
    Ok(tape.reshape(&back, &[b, cout, h, wd])?)
}

pub(crate) fn dims4(x: &Tensor) -> (usize, usize, usize, usize) {
    let s = x.shape();
    (s[0], s[1], s[2], s[3])
}

/// Per-grid-cell two-layer MLP with GELU; weights (Cin, Ch), (Ch, Cout),
/// biases broadcast over the grid. No spatial mixing by construction.
#[derive(Debug, Clone)]
pub struct PointwiseMlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl PointwiseMlp {
    pub fn init(rng: &mut impl Rng, cin: usize, hidden: usize, cout: usize) -> Self {
        Self {
            w1: normal_param(rng, &[cin, hidden], INIT_STD),
            b1: zeros_param(&[hidden, 1, 1]),
            w2: normal_param(rng, &[hidden, cout], INIT_STD),
            b2: zeros_param(&[cout, 1, 1]),
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        let h = channel_map(tape, x, &self.w1)?;
        let h = tape.add(&h, &self.b1)?;
        let h = tape.gelu(&h)?;
        let y = channel_map(tape, &h, &self.w2)?;
        Ok(tape.add(&y, &self.b2)?)
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w1"), self.w1.clone()));
        out.push((format!("{prefix}.b1"), self.b1.clone()));
        out.push((format!("{prefix}.w2"), self.w2.clone()));
        out.push((format!("{prefix}.b2"), self.b2.clone()));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.w2"), &mut self.w2));
        out.push((format!("{prefix}.b2"), &mut self.b2));
    }
}

/// Instance norm over the spatial axes of a (B, C, H, W) latent with
/// learnable per-channel affine.
#[derive(Debug, Clone)]
pub struct Norm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl Norm2d {
    pub fn init(c: usize) -> Self {
        Self {
            gamma: full_param(&[c, 1, 1], 1.0),
            beta: zeros_param(&[c, 1, 1]),
            eps: 1e-5,
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        Ok(instance_norm(tape, x, &[2, 3], &self.gamma, &self.beta, self.eps)?)
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }
}

pub(crate) fn ensure_finite(t: &Tensor, stage: &'static str) -> Result<()> {
    if t.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::error::ModelError::NonFinite { stage })
    }
}
