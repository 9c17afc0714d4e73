//! Efficient local attention: directional strip gating.
//!
//! The latent is mean-pooled along longitude and along latitude separately,
//! each pooled strip is mixed by a learnable width-7 depthwise stencil
//! (edge-clamped across latitude, periodic across longitude), normalized,
//! and squashed through a sigmoid. The two gate fields multiply the input
//! back, broadcast over the pooled direction.

use crate::blocks::{full_param, normal_param, zeros_param, INIT_STD};
use crate::error::Result;
use diff_engine::{instance_norm, Tape, Tensor};
use rand::Rng;

const ELA_WIDTH: usize = 7;

#[derive(Debug, Clone)]
pub struct ElaParams {
    /// (C, 7) stencil taps for the latitude strip (pooled over longitude).
    pub lat_taps: Tensor,
    /// (C, 7) stencil taps for the longitude strip (pooled over latitude).
    pub lon_taps: Tensor,
    pub lat_gamma: Tensor,
    pub lat_beta: Tensor,
    pub lon_gamma: Tensor,
    pub lon_beta: Tensor,
    pub eps: f64,
}

impl ElaParams {
    pub fn init(rng: &mut impl Rng, c: usize) -> Self {
        Self {
            lat_taps: normal_param(rng, &[c, ELA_WIDTH], INIT_STD),
            lon_taps: normal_param(rng, &[c, ELA_WIDTH], INIT_STD),
            lat_gamma: full_param(&[c, 1, 1], 1.0),
            lat_beta: zeros_param(&[c, 1, 1]),
            lon_gamma: full_param(&[c, 1, 1], 1.0),
            lon_beta: zeros_param(&[c, 1, 1]),
            eps: 1e-5,
        }
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.lat_taps"), self.lat_taps.clone()));
        out.push((format!("{prefix}.lon_taps"), self.lon_taps.clone()));
        out.push((format!("{prefix}.lat_gamma"), self.lat_gamma.clone()));
        out.push((format!("{prefix}.lat_beta"), self.lat_beta.clone()));
        out.push((format!("{prefix}.lon_gamma"), self.lon_gamma.clone()));
        out.push((format!("{prefix}.lon_beta"), self.lon_beta.clone()));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.lat_taps"), &mut self.lat_taps));
        out.push((format!("{prefix}.lon_taps"), &mut self.lon_taps));
        out.push((format!("{prefix}.lat_gamma"), &mut self.lat_gamma));
        out.push((format!("{prefix}.lat_beta"), &mut self.lat_beta));
        out.push((format!("{prefix}.lon_gamma"), &mut self.lon_gamma));
        out.push((format!("{prefix}.lon_beta"), &mut self.lon_beta));
    }
}

/// Depthwise width-7 mixing of a pooled strip along `axis`, one tap vector
/// per channel. `periodic` wraps the shifts; otherwise the edge is clamped.
fn strip_mix(
    tape: &mut Tape,
    strip: &Tensor,
    taps: &Tensor,
    axis: usize,
    periodic: bool,
) -> Result<Tensor> {
    let c = taps.shape()[0];
    let half = (ELA_WIDTH / 2) as i64;
    let mut acc: Option<Tensor> = None;
    for k in 0..ELA_WIDTH {
        let offset = k as i64 - half;
        let shifted = if periodic {
            tape.roll(strip, axis, -offset)?
        } else {
            tape.shift_clamped(strip, axis, -offset)?
        };
        let tap = tape.slice(taps, 1, k, 1)?;
        let tap = tape.reshape(&tap, &[c, 1, 1])?;
        let term = tape.mul(&shifted, &tap)?;
        acc = Some(match acc {
            Some(a) => tape.add(&a, &term)?,
            None => term,
        });
    }
    Ok(acc.expect("width is positive"))
}

/// Gate `g` (B, C, H, W) by sigmoid-normalized pooled-strip mixes along both
/// grid directions. Shape-preserving.
pub fn ela(tape: &mut Tape, g: &Tensor, params: &ElaParams) -> Result<Tensor> {
    let shape = g.shape();
    if shape.len() != 4 {
        return Err(crate::error::ModelError::Config(format!(
            "ela expects a (batch, channels, lat, lon) field, got shape {shape:?}"
        )));
    }

    // Latitude strip: pool over longitude, mix along latitude (clamped poles).
    let lat_strip = tape.mean_axis(g, 3)?;
    let lat_mixed = strip_mix(tape, &lat_strip, &params.lat_taps, 2, false)?;
    let lat_norm = instance_norm(
        tape,
        &lat_mixed,
        &[2, 3],
        &params.lat_gamma,
        &params.lat_beta,
        params.eps,
    )?;
    let lat_gate = tape.sigmoid(&lat_norm)?;

    // Longitude strip: pool over latitude, mix along longitude (periodic).
    let lon_strip = tape.mean_axis(g, 2)?;
    let lon_mixed = strip_mix(tape, &lon_strip, &params.lon_taps, 3, true)?;
    let lon_norm = instance_norm(
        tape,
        &lon_mixed,
        &[2, 3],
        &params.lon_gamma,
        &params.lon_beta,
        params.eps,
    )?;
    let lon_gate = tape.sigmoid(&lon_norm)?;

    let gated = tape.mul(g, &lat_gate)?;
    Ok(tape.mul(&gated, &lon_gate)?)
}
