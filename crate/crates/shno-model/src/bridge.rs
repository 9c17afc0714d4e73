//! Differentiable bridge between grid latents and spectral tokens.
//!
//! Latents are real (B, C, H, W) tensors; token tensors are complex
//! (B, N, C) with one token per retained (n, m) mode. Both directions are
//! exposed as custom tape ops whose backward passes are the exact transposes
//! of the corresponding real-linear maps (analysis and synthesis).

use crate::error::Result;
use diff_engine::{CTensor, CustomOp, Tape, Tensor, TensorData};
use num_complex::Complex64;
use sht_core::{GridField, SpectralCoeffs, Sht};
use std::sync::Arc;

/// Copy a (B·C)-channel coefficient set into (B, N, C) re/im planes.
fn coeffs_to_tokens(c: &SpectralCoeffs, batch: usize, channels: usize) -> (TensorData, TensorData) {
    let n = c.trunc().num_modes();
    let mut re = vec![0.0; batch * n * channels];
    let mut im = vec![0.0; batch * n * channels];
    for b in 0..batch {
        for ch in 0..channels {
            let col = c.channel(b * channels + ch);
            for j in 0..n {
                re[(b * n + j) * channels + ch] = col[j].re;
                im[(b * n + j) * channels + ch] = col[j].im;
            }
        }
    }
    let shape = vec![batch, n, channels];
    (
        TensorData::new(shape.clone(), re).unwrap(),
        TensorData::new(shape, im).unwrap(),
    )
}

/// Inverse of [`coeffs_to_tokens`]; absent planes read as zero.
fn tokens_to_coeffs(
    sht: &Sht,
    re: Option<&TensorData>,
    im: Option<&TensorData>,
    shape: &[usize],
) -> SpectralCoeffs {
    let (batch, n, channels) = (shape[0], shape[1], shape[2]);
    let mut out = SpectralCoeffs::zeros(sht.trunc(), batch * channels);
    for b in 0..batch {
        for ch in 0..channels {
            let col = out.channel_mut(b * channels + ch);
            for (j, v) in col.iter_mut().enumerate() {
                let k = (b * n + j) * channels + ch;
                *v = Complex64::new(
                    re.map_or(0.0, |t| t.data[k]),
                    im.map_or(0.0, |t| t.data[k]),
                );
            }
        }
    }
    out
}

fn grid_field(sht: &Sht, data: &TensorData) -> GridField {
    let channels = data.shape[0] * data.shape[1];
    GridField::from_values(Arc::clone(sht.grid()), channels, data.data.clone()).unwrap()
}

#[derive(Debug)]
struct ShtForwardOp {
    sht: Arc<Sht>,
}

impl CustomOp for ShtForwardOp {
    fn name(&self) -> &'static str {
        "sht_forward"
    }

    fn forward(&self, inputs: &[&TensorData]) -> diff_engine::Result<Vec<TensorData>> {
        let x = inputs[0];
        let (batch, channels) = (x.shape[0], x.shape[1]);
        let coeffs = self.sht.forward(&grid_field(&self.sht, x)).map_err(to_diff)?;
        let (re, im) = coeffs_to_tokens(&coeffs, batch, channels);
        Ok(vec![re, im])
    }

    fn backward(
        &self,
        inputs: &[&TensorData],
        outputs: &[&TensorData],
        out_grads: &[Option<&TensorData>],
    ) -> diff_engine::Result<Vec<Option<TensorData>>> {
        let cbar = tokens_to_coeffs(&self.sht, out_grads[0], out_grads[1], &outputs[0].shape);
        let gx = self.sht.forward_adjoint(&cbar).map_err(to_diff)?;
        Ok(vec![Some(TensorData::new(
            inputs[0].shape.clone(),
            gx.values().to_vec(),
        )?)])
    }
}

#[derive(Debug)]
struct ShtInverseOp {
    sht: Arc<Sht>,
}

impl CustomOp for ShtInverseOp {
    fn name(&self) -> &'static str {
        "sht_inverse"
    }

    fn forward(&self, inputs: &[&TensorData]) -> diff_engine::Result<Vec<TensorData>> {
        let shape = &inputs[0].shape;
        let (batch, channels) = (shape[0], shape[2]);
        let coeffs = tokens_to_coeffs(&self.sht, Some(inputs[0]), Some(inputs[1]), shape);
        let grid = self.sht.inverse(&coeffs).map_err(to_diff)?;
        let (nlat, nlon) = (self.sht.grid().nlat(), self.sht.grid().nlon());
        Ok(vec![TensorData::new(
            vec![batch, channels, nlat, nlon],
            grid.values().to_vec(),
        )?])
    }

    fn backward(
        &self,
        inputs: &[&TensorData],
        _outputs: &[&TensorData],
        out_grads: &[Option<&TensorData>],
    ) -> diff_engine::Result<Vec<Option<TensorData>>> {
        let Some(gx) = out_grads[0] else {
            return Ok(vec![None, None]);
        };
        let cbar = self
            .sht
            .inverse_adjoint(&grid_field(&self.sht, gx))
            .map_err(to_diff)?;
        let shape = &inputs[0].shape;
        let (re, im) = coeffs_to_tokens(&cbar, shape[0], shape[2]);
        Ok(vec![Some(re), Some(im)])
    }
}

fn to_diff(e: sht_core::ShtError) -> diff_engine::DiffError {
    diff_engine::DiffError::InvalidArgument {
        op: "spherical transform",
        details: e.to_string(),
    }
}

/// Analysis of a (B, C, H, W) latent into (B, N, C) spectral tokens.
pub fn sht_tokens(tape: &mut Tape, sht: &Arc<Sht>, x: &Tensor) -> Result<CTensor> {
    let outs = tape.apply(Arc::new(ShtForwardOp { sht: Arc::clone(sht) }), &[x])?;
    let mut it = outs.into_iter();
    Ok(CTensor::new(it.next().unwrap(), it.next().unwrap())?)
}

/// Synthesis of (B, N, C) spectral tokens back onto the grid.
pub fn grid_from_tokens(tape: &mut Tape, sht: &Arc<Sht>, t: &CTensor) -> Result<Tensor> {
    let outs = tape.apply(
        Arc::new(ShtInverseOp { sht: Arc::clone(sht) }),
        &[&t.re, &t.im],
    )?;
    Ok(outs.into_iter().next().unwrap())
}
