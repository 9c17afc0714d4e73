//! Spectral mixing layers: the full attention layer (GRSA or SMHSA inside)
//! and the per-degree linear baseline layer. Both share the same scaffold:
//! instance norm, spherical analysis, a spectral mixer, spherical synthesis
//! with a learnable grid-space residual, and a GELU + norm + MPFFN tail.

use crate::blocks::{channel_map, ensure_finite, identity_param, normal_param, Norm2d, INIT_STD};
use crate::bridge::{grid_from_tokens, sht_tokens};
use crate::ela::{ela, ElaParams};
use crate::error::Result;
use crate::mpffn::{mpffn, MpffnParams};
use diff_engine::{CTensor, Tape, Tensor, TensorData};
use rand::Rng;
use sht_core::Sht;
use spectral_attention::{
    grsa, smhsa, GrsaParams, LaplacianState, SmhsaParams, SpectralTokens,
};
use std::sync::Arc;

/// Which attention flavor sits inside the spectral layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Grsa,
    Smhsa,
}

#[derive(Debug, Clone)]
pub enum AttnBlock {
    Grsa(GrsaParams),
    Smhsa(SmhsaParams),
}

impl AttnBlock {
    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        match self {
            AttnBlock::Grsa(p) => out.extend(p.parameters(prefix)),
            AttnBlock::Smhsa(p) => out.extend(p.parameters(prefix)),
        }
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        match self {
            AttnBlock::Grsa(p) => p.parameters_mut(prefix, out),
            AttnBlock::Smhsa(p) => p.parameters_mut(prefix, out),
        }
    }
}

/// Parameters of one attention layer.
#[derive(Debug, Clone)]
pub struct ShnoLayerParams {
    pub norm1: Norm2d,
    /// (N, C) complex degree encoding added to the tokens entering attention.
    pub e_degree: CTensor,
    pub attention: AttnBlock,
    /// Real (C, C) residual map on the synthesized latent; identity at init.
    pub w_res: Tensor,
    pub ela: ElaParams,
    pub norm2: Norm2d,
    pub mpffn: MpffnParams,
}

impl ShnoLayerParams {
    pub fn init(
        rng: &mut impl Rng,
        c: usize,
        heads: usize,
        registers: usize,
        ffn_hidden: usize,
        num_modes: usize,
        kind: AttentionKind,
    ) -> Result<Self> {
        let attention = match kind {
            AttentionKind::Grsa => {
                AttnBlock::Grsa(GrsaParams::init(rng, c, heads, registers, INIT_STD)?)
            }
            AttentionKind::Smhsa => {
                AttnBlock::Smhsa(SmhsaParams::init(rng, c, heads, INIT_STD)?)
            }
        };
        Ok(Self {
            norm1: Norm2d::init(c),
            e_degree: CTensor {
                re: normal_param(rng, &[num_modes, c], INIT_STD),
                im: normal_param(rng, &[num_modes, c], INIT_STD),
            },
            attention,
            w_res: identity_param(c),
            ela: ElaParams::init(rng, c),
            norm2: Norm2d::init(c),
            mpffn: MpffnParams::init(rng, c, ffn_hidden)?,
        })
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.norm1.visit(&format!("{prefix}.norm1"), out);
        out.push((format!("{prefix}.e_degree.re"), self.e_degree.re.clone()));
        out.push((format!("{prefix}.e_degree.im"), self.e_degree.im.clone()));
        self.attention.visit(&format!("{prefix}.attn"), out);
        out.push((format!("{prefix}.w_res"), self.w_res.clone()));
        self.ela.visit(&format!("{prefix}.ela"), out);
        self.norm2.visit(&format!("{prefix}.norm2"), out);
        self.mpffn.visit(&format!("{prefix}.mpffn"), out);
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.norm1.visit_mut(&format!("{prefix}.norm1"), out);
        out.push((format!("{prefix}.e_degree.re"), &mut self.e_degree.re));
        out.push((format!("{prefix}.e_degree.im"), &mut self.e_degree.im));
        self.attention.visit_mut(&format!("{prefix}.attn"), out);
        out.push((format!("{prefix}.w_res"), &mut self.w_res));
        self.ela.visit_mut(&format!("{prefix}.ela"), out);
        self.norm2.visit_mut(&format!("{prefix}.norm2"), out);
        self.mpffn.visit_mut(&format!("{prefix}.mpffn"), out);
    }
}

fn ensure_finite_c(t: &CTensor, stage: &'static str) -> Result<()> {
    ensure_finite(&t.re, stage)?;
    ensure_finite(&t.im, stage)
}

/// One attention layer step on a (B, C, H, W) latent. The incoming
/// `state` carries the previous layer's graph Laplacians; the returned state
/// carries this layer's fresh ones.
pub fn shno_layer(
    tape: &mut Tape,
    sht: &Arc<Sht>,
    modes: &Arc<Vec<(usize, usize)>>,
    z: &Tensor,
    params: &ShnoLayerParams,
    state: &LaplacianState,
) -> Result<(Tensor, LaplacianState)> {
    let normed = params.norm1.apply(tape, z)?;
    ensure_finite(&normed, "instance norm")?;

    let zp = sht_tokens(tape, sht, &normed)?;
    ensure_finite_c(&zp, "spherical analysis")?;

    let encoded = zp.add(tape, &params.e_degree)?;
    let tokens = SpectralTokens::new(encoded, Arc::clone(modes))?;
    let (mixed, state_out) = match &params.attention {
        AttnBlock::Grsa(p) => grsa(tape, &tokens, p, state)?,
        AttnBlock::Smhsa(p) => (smhsa(tape, &tokens, p)?, state.clone()),
    };
    ensure_finite_c(&mixed.values, "attention")?;

    let zhat = grid_from_tokens(tape, sht, &zp)?;
    let attn_grid = grid_from_tokens(tape, sht, &mixed.values)?;
    ensure_finite(&attn_grid, "spherical synthesis")?;

    let res = channel_map(tape, &zhat, &params.w_res)?;
    let gated = ela(tape, &attn_grid, &params.ela)?;
    let z2 = tape.add(&gated, &res)?;
    ensure_finite(&z2, "local gating")?;

    let act = tape.gelu(&z2)?;
    let normed2 = params.norm2.apply(tape, &act)?;
    let ff = mpffn(tape, &normed2, &params.mpffn)?;
    let out = tape.add(&ff, &zhat)?;
    ensure_finite(&out, "feed-forward")?;

    Ok((out, state_out))
}

/// Parameters of one per-degree linear layer (the equivariant baseline).
#[derive(Debug, Clone)]
pub struct SfnoLayerParams {
    pub norm1: Norm2d,
    /// One complex (C, C) channel map per total degree n, shared across
    /// orders m. Identity at init.
    pub w_deg: Vec<CTensor>,
    pub w_res: Tensor,
    pub norm2: Norm2d,
    pub mpffn: MpffnParams,
}

impl SfnoLayerParams {
    pub fn init(rng: &mut impl Rng, c: usize, ffn_hidden: usize, degrees: usize) -> Result<Self> {
        let mut re = vec![0.0; c * c];
        for i in 0..c {
            re[i * c + i] = 1.0;
        }
        Ok(Self {
            norm1: Norm2d::init(c),
            w_deg: (0..degrees)
                .map(|_| CTensor {
                    re: Tensor::param(TensorData::new(vec![c, c], re.clone()).unwrap()),
                    im: Tensor::param(TensorData::zeros(&[c, c])),
                })
                .collect(),
            w_res: identity_param(c),
            norm2: Norm2d::init(c),
            mpffn: MpffnParams::init(rng, c, ffn_hidden)?,
        })
    }

    pub fn visit(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.norm1.visit(&format!("{prefix}.norm1"), out);
        for (n, w) in self.w_deg.iter().enumerate() {
            out.push((format!("{prefix}.w_deg{n}.re"), w.re.clone()));
            out.push((format!("{prefix}.w_deg{n}.im"), w.im.clone()));
        }
        out.push((format!("{prefix}.w_res"), self.w_res.clone()));
        self.norm2.visit(&format!("{prefix}.norm2"), out);
        self.mpffn.visit(&format!("{prefix}.mpffn"), out);
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.norm1.visit_mut(&format!("{prefix}.norm1"), out);
        for (n, w) in self.w_deg.iter_mut().enumerate() {
            out.push((format!("{prefix}.w_deg{n}.re"), &mut w.re));
            out.push((format!("{prefix}.w_deg{n}.im"), &mut w.im));
        }
        out.push((format!("{prefix}.w_res"), &mut self.w_res));
        self.norm2.visit_mut(&format!("{prefix}.norm2"), out);
        self.mpffn.visit_mut(&format!("{prefix}.mpffn"), out);
    }
}

/// Map tokens by the per-degree channel matrices. Tokens of equal degree
/// are contiguous rows, so each degree is one stacked matmul.
fn degree_map(tape: &mut Tape, sht: &Sht, t: &CTensor, w_deg: &[CTensor]) -> Result<CTensor> {
    let trunc = sht.trunc();
    if w_deg.len() != trunc.n_max() + 1 {
        return Err(crate::error::ModelError::Config(format!(
            "{} degree maps for a truncation with {} degrees",
            w_deg.len(),
            trunc.n_max() + 1
        )));
    }
    let mut blocks = Vec::with_capacity(trunc.n_max() + 1);
    for (n, wn) in w_deg.iter().enumerate() {
        let rows = t.slice(tape, 1, trunc.degree_offset(n), trunc.m_count(n))?;
        blocks.push(rows.matmul(tape, wn)?);
    }
    let refs: Vec<&CTensor> = blocks.iter().collect();
    CTensor::concat(tape, &refs, 1).map_err(Into::into)
}

/// One per-degree linear layer step on a (B, C, H, W) latent.
pub fn sfno_layer(
    tape: &mut Tape,
    sht: &Arc<Sht>,
    z: &Tensor,
    params: &SfnoLayerParams,
) -> Result<Tensor> {
    let normed = params.norm1.apply(tape, z)?;
    ensure_finite(&normed, "instance norm")?;

    let zp = sht_tokens(tape, sht, &normed)?;
    ensure_finite_c(&zp, "spherical analysis")?;

    let mixed = degree_map(tape, sht, &zp, &params.w_deg)?;
    ensure_finite_c(&mixed, "degree mixing")?;

    let zhat = grid_from_tokens(tape, sht, &zp)?;
    let mix_grid = grid_from_tokens(tape, sht, &mixed)?;
    ensure_finite(&mix_grid, "spherical synthesis")?;

    let res = channel_map(tape, &zhat, &params.w_res)?;
    let z2 = tape.add(&mix_grid, &res)?;

    let act = tape.gelu(&z2)?;
    let normed2 = params.norm2.apply(tape, &act)?;
    let ff = mpffn(tape, &normed2, &params.mpffn)?;
    let out = tape.add(&ff, &zhat)?;
    ensure_finite(&out, "feed-forward")?;
    Ok(out)
}
