//! Multi-path feed-forward network: pointwise channel expansion, three
//! parallel depthwise smoothing paths at stencil scales {1, 3, 5}, GELU,
//! and a pointwise projection back to the embedding width.

use crate::blocks::{channel_map, full_param, normal_param, zeros_param, INIT_STD};
use crate::error::{ModelError, Result};
use diff_engine::{Tape, Tensor};
use rand::Rng;

/// Stencil widths of the three smoothing paths.
const PATH_SCALES: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone)]
pub struct MpffnParams {
    pub w_up: Tensor,
    pub b_up: Tensor,
    /// Per-channel multipliers for the scale-1 / scale-3 / scale-5 paths.
    pub path_scales: [Tensor; 3],
    pub w_down: Tensor,
    pub b_down: Tensor,
}

/// Channel widths of the three paths: half, quarter, quarter of `hidden`.
pub fn path_widths(hidden: usize) -> Result<[usize; 3]> {
    if hidden % 4 != 0 || hidden == 0 {
        return Err(ModelError::Config(format!(
            "mpffn hidden width must be a positive multiple of 4 to split into \
             half/quarter/quarter paths, got {hidden}"
        )));
    }
    Ok([hidden / 2, hidden / 4, hidden / 4])
}

impl MpffnParams {
    pub fn init(rng: &mut impl Rng, c: usize, hidden: usize) -> Result<Self> {
        let widths = path_widths(hidden)?;
        Ok(Self {
            w_up: normal_param(rng, &[c, hidden], INIT_STD),
            b_up: zeros_param(&[hidden, 1, 1]),
            path_scales: widths.map(|w| full_param(&[w, 1, 1], 1.0)),
            w_down: normal_param(rng, &[hidden, c], INIT_STD),
            b_down: zeros_param(&[c, 1, 1]),
        })
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w_up"), self.w_up.clone()));
        out.push((format!("{prefix}.b_up"), self.b_up.clone()));
        for (scale, t) in PATH_SCALES.iter().zip(&self.path_scales) {
            out.push((format!("{prefix}.scale{scale}"), t.clone()));
        }
        out.push((format!("{prefix}.w_down"), self.w_down.clone()));
        out.push((format!("{prefix}.b_down"), self.b_down.clone()));
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.w_up"), &mut self.w_up));
        out.push((format!("{prefix}.b_up"), &mut self.b_up));
        for (scale, t) in PATH_SCALES.iter().zip(self.path_scales.iter_mut()) {
            out.push((format!("{prefix}.scale{scale}"), t));
        }
        out.push((format!("{prefix}.w_down"), &mut self.w_down));
        out.push((format!("{prefix}.b_down"), &mut self.b_down));
    }
}

/// Apply the MPFFN to a (B, C, H, W) latent. Latitude stencils clamp at the
/// poles; longitude stencils wrap.
pub fn mpffn(tape: &mut Tape, g: &Tensor, params: &MpffnParams) -> Result<Tensor> {
    let hidden = params.w_up.shape()[1];
    let widths = path_widths(hidden)?;

    let up = channel_map(tape, g, &params.w_up)?;
    let up = tape.add(&up, &params.b_up)?;

    let mut paths = Vec::with_capacity(3);
    let mut start = 0;
    for ((&scale, &width), gain) in PATH_SCALES
        .iter()
        .zip(widths.iter())
        .zip(&params.path_scales)
    {
        let part = tape.slice(&up, 1, start, width)?;
        start += width;
        let smoothed = if scale == 1 {
            part
        } else {
            let lat = tape.box_filter1d(&part, 2, scale, false)?;
            tape.box_filter1d(&lat, 3, scale, true)?
        };
        let scaled = tape.mul(&smoothed, gain)?;
        paths.push(tape.gelu(&scaled)?);
    }

    let refs: Vec<&Tensor> = paths.iter().collect();
    let merged = tape.concat(&refs, 1)?;
    let down = channel_map(tape, &merged, &params.w_down)?;
    Ok(tape.add(&down, &params.b_down)?)
}
