//! Spectral multi-head self-attention with the complex softmax:
//! per head O = CSoftmax(Q·K^H/√d)·V, heads concatenated, projected C→C.

use crate::csoftmax::csoftmax;
use crate::error::{AttnError, Result};
use crate::linear::CLinear;
use crate::tokens::SpectralTokens;
use diff_engine::{CTensor, Tape};
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SmhsaParams {
    pub heads: usize,
    pub w_q: CLinear,
    pub w_k: CLinear,
    pub w_v: CLinear,
    pub w_p: CLinear,
}

impl SmhsaParams {
    pub fn init(rng: &mut impl Rng, channels: usize, heads: usize, std: f64) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(AttnError::Shape(format!(
                "channels {channels} not divisible into {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            w_q: CLinear::init(rng, channels, channels, std),
            w_k: CLinear::init(rng, channels, channels, std),
            w_v: CLinear::init(rng, channels, channels, std),
            w_p: CLinear::init(rng, channels, channels, std),
        })
    }

    pub fn parameters(&self, prefix: &str) -> Vec<(String, diff_engine::Tensor)> {
        let mut out = Vec::new();
        self.w_q.visit(&format!("{prefix}.w_q"), &mut out);
        self.w_k.visit(&format!("{prefix}.w_k"), &mut out);
        self.w_v.visit(&format!("{prefix}.w_v"), &mut out);
        self.w_p.visit(&format!("{prefix}.w_p"), &mut out);
        out
    }

    pub fn parameters_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut diff_engine::Tensor)>,
    ) {
        self.w_q.visit_mut(&format!("{prefix}.w_q"), out);
        self.w_k.visit_mut(&format!("{prefix}.w_k"), out);
        self.w_v.visit_mut(&format!("{prefix}.w_v"), out);
        self.w_p.visit_mut(&format!("{prefix}.w_p"), out);
    }
}

/// View an (N, C) matrix as a batch of one; leaves (B, N, C) untouched.
pub(crate) fn as_batched(tape: &mut Tape, z: &CTensor) -> Result<(CTensor, bool)> {
    match z.shape().len() {
        2 => {
            let mut shape = vec![1];
            shape.extend_from_slice(z.shape());
            Ok((z.reshape(tape, &shape)?, true))
        }
        3 => Ok((z.clone(), false)),
        r => Err(AttnError::Shape(format!("expected rank 2 or 3 tokens, got rank {r}"))),
    }
}

pub(crate) fn unbatch(tape: &mut Tape, z: &CTensor, squeeze: bool) -> Result<CTensor> {
    if squeeze {
        Ok(z.reshape(tape, &z.shape()[1..].to_vec())?)
    } else {
        Ok(z.clone())
    }
}

pub fn smhsa(tape: &mut Tape, z: &SpectralTokens, params: &SmhsaParams) -> Result<SpectralTokens> {
    let c = z.channels();
    if params.w_q.w.shape() != [c, c] {
        return Err(AttnError::Shape(format!(
            "projection is {:?} but tokens have {c} channels",
            params.w_q.w.shape()
        )));
    }
    let (x, squeeze) = as_batched(tape, &z.values)?;
    let d = c / params.heads;
    let q = params.w_q.apply(tape, &x)?;
    let k = params.w_k.apply(tape, &x)?;
    let v = params.w_v.apply(tape, &x)?;

    let mut head_outs = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let qh = q.slice(tape, 2, h * d, d)?;
        let kh = k.slice(tape, 2, h * d, d)?;
        let vh = v.slice(tape, 2, h * d, d)?;
        let kh_h = kh.conj_t(tape)?;
        let logits = qh.bmm(tape, &kh_h)?.scale_const(tape, 1.0 / (d as f64).sqrt())?;
        let attn = csoftmax(tape, &logits)?;
        head_outs.push(attn.bmm(tape, &vh)?);
    }
    let refs: Vec<&CTensor> = head_outs.iter().collect();
    let merged = CTensor::concat(tape, &refs, 2)?;
    let out = params.w_p.apply(tape, &merged)?;
    Ok(SpectralTokens {
        values: unbatch(tape, &out, squeeze)?,
        modes: Arc::clone(&z.modes),
    })
}
