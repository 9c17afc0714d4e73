//! Gated recurrent spectral attention: token mixing through a parametric
//! graph Laplacian with a cross-layer moving average and multiplicative
//! gating, plus learnable register tokens that absorb feature outliers.

use crate::error::{AttnError, Result};
use crate::laplacian::{parametric_laplacian, LaplacianState};
use crate::linear::{normal_param, CLinear, ComplexMlp};
use crate::smhsa::{as_batched, unbatch};
use crate::smu::smu_c;
use crate::tokens::SpectralTokens;
use diff_engine::{CTensor, Tape, Tensor, TensorData};
use rand::Rng;
use std::sync::Arc;

/// One GRSA block: four complex projections, a per-head adjacency MLP `g`,
/// learnable registers, and two scalars — the moving-average logit `α` and
/// the SMU knee `μ` — shared by every head of the block.
#[derive(Debug, Clone)]
pub struct GrsaParams {
    pub heads: usize,
    pub registers: CTensor,
    pub w_y: CLinear,
    pub w_v: CLinear,
    pub w_q: CLinear,
    pub w_p: CLinear,
    pub g: Vec<ComplexMlp>,
    pub alpha: Tensor,
    pub mu: Tensor,
}

impl GrsaParams {
    pub fn init(
        rng: &mut impl Rng,
        channels: usize,
        heads: usize,
        registers: usize,
        std: f64,
    ) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(AttnError::Shape(format!(
                "channels {channels} not divisible into {heads} heads"
            )));
        }
        let d = channels / heads;
        Ok(Self {
            heads,
            registers: CTensor {
                re: normal_param(rng, &[registers, channels], std),
                im: normal_param(rng, &[registers, channels], std),
            },
            w_y: CLinear::init(rng, channels, channels, std),
            w_v: CLinear::init(rng, channels, channels, std),
            w_q: CLinear::init(rng, channels, channels, std),
            w_p: CLinear::init(rng, channels, channels, std),
            g: (0..heads)
                .map(|_| ComplexMlp::init(rng, channels, d, std))
                .collect(),
            alpha: Tensor::param(TensorData::new(vec![1], vec![0.0]).unwrap()),
            mu: Tensor::param(TensorData::new(vec![1], vec![1.0]).unwrap()),
        })
    }

    pub fn register_count(&self) -> usize {
        self.registers.shape()[0]
    }

    pub fn parameters(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = vec![
            (format!("{prefix}.registers.re"), self.registers.re.clone()),
            (format!("{prefix}.registers.im"), self.registers.im.clone()),
            (format!("{prefix}.alpha"), self.alpha.clone()),
            (format!("{prefix}.mu"), self.mu.clone()),
        ];
        self.w_y.visit(&format!("{prefix}.w_y"), &mut out);
        self.w_v.visit(&format!("{prefix}.w_v"), &mut out);
        self.w_q.visit(&format!("{prefix}.w_q"), &mut out);
        self.w_p.visit(&format!("{prefix}.w_p"), &mut out);
        for (h, g) in self.g.iter().enumerate() {
            g.visit(&format!("{prefix}.g{h}"), &mut out);
        }
        out
    }

    pub fn parameters_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor)>,
    ) {
        out.push((format!("{prefix}.registers.re"), &mut self.registers.re));
        out.push((format!("{prefix}.registers.im"), &mut self.registers.im));
        out.push((format!("{prefix}.alpha"), &mut self.alpha));
        out.push((format!("{prefix}.mu"), &mut self.mu));
        self.w_y.visit_mut(&format!("{prefix}.w_y"), out);
        self.w_v.visit_mut(&format!("{prefix}.w_v"), out);
        self.w_q.visit_mut(&format!("{prefix}.w_q"), out);
        self.w_p.visit_mut(&format!("{prefix}.w_p"), out);
        for (h, g) in self.g.iter_mut().enumerate() {
            g.visit_mut(&format!("{prefix}.g{h}"), out);
        }
    }
}

/// One GRSA step. Returns the mixed tokens (registers dropped, residual
/// added) and the fresh per-head Laplacians for the next layer's average.
pub fn grsa(
    tape: &mut Tape,
    x: &SpectralTokens,
    params: &GrsaParams,
    state: &LaplacianState,
) -> Result<(SpectralTokens, LaplacianState)> {
    let n = x.token_count();
    let c = x.channels();
    let r = params.register_count();
    let t = n + r;
    if params.w_y.w.shape() != [c, c] {
        return Err(AttnError::Shape(format!(
            "projection is {:?} but tokens have {c} channels",
            params.w_y.w.shape()
        )));
    }
    if state.heads() != params.heads {
        return Err(AttnError::Shape(format!(
            "state holds {} heads, params {}",
            state.heads(),
            params.heads
        )));
    }
    let (xb, squeeze) = as_batched(tape, &x.values)?;
    let batch = xb.shape()[0];
    for l_prev in &state.per_head {
        if l_prev.shape() != [batch, t, t] {
            return Err(AttnError::Shape(format!(
                "carried Laplacian is {:?} but {n} tokens + {r} registers need {:?}",
                l_prev.shape(),
                [batch, t, t]
            )));
        }
    }

    let y = params.w_y.apply(tape, &xb)?;
    let reg = params.registers.broadcast_to(tape, &[batch, r, c])?;
    let xp = CTensor::concat(tape, &[&xb, &reg], 1)?;

    let v = params.w_v.apply(tape, &xp)?;
    let phi_v = smu_c(tape, &v, &params.mu)?;
    let q = params.w_q.apply(tape, &xp)?;
    let phi_q = smu_c(tape, &q, &params.mu)?;

    let d = c / params.heads;
    let mut head_outs = Vec::with_capacity(params.heads);
    let mut fresh = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let l = parametric_laplacian(
            tape,
            &xp,
            &params.g[h],
            &params.alpha,
            &params.mu,
            &state.per_head[h],
        )?;
        let vh = phi_v.slice(tape, 2, h * d, d)?;
        head_outs.push(l.bmm(tape, &vh)?);
        fresh.push(l);
    }
    let refs: Vec<&CTensor> = head_outs.iter().collect();
    let z = CTensor::concat(tape, &refs, 2)?;
    let gated = z.hadamard(tape, &phi_q)?;
    let projected = params.w_p.apply(tape, &gated)?;
    let kept = projected.slice(tape, 1, 0, n)?;
    let out = kept.add(tape, &y)?;
    Ok((
        SpectralTokens {
            values: unbatch(tape, &out, squeeze)?,
            modes: Arc::clone(&x.modes),
        },
        LaplacianState { per_head: fresh },
    ))
}
