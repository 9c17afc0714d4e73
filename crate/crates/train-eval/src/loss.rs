//! Differentiable training losses on (batch, channel, lat, lon) tensors.

use crate::error::{Result, TrainError};
use crate::weights::MetricWeights;
use diff_engine::{Tape, Tensor, TensorData};

fn check_pair(pred: &Tensor, truth: &Tensor, weights: &MetricWeights) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(TrainError::InvalidArgument(format!(
            "prediction shape {:?} does not match truth shape {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.shape().len() != 4 {
        return Err(TrainError::InvalidArgument(
            "losses expect (batch, channels, lat, lon) tensors".into(),
        ));
    }
    if pred.shape()[2] != weights.nlat() {
        return Err(TrainError::InvalidArgument(format!(
            "fields have {} latitudes but the weights have {}",
            pred.shape()[2],
            weights.nlat()
        )));
    }
    Ok(())
}

/// Latitude column as an (H, 1) constant, broadcastable onto (B, C, H, W).
fn lat_column(w: &[f64]) -> Tensor {
    Tensor::constant(TensorData::new(vec![w.len(), 1], w.to_vec()).expect("column shape"))
}

/// Mean geometric relative norm: per sample and channel,
/// sqrt(Σ_ij q_i |pred − truth|² / Σ_ij q_i |truth|²) with quadrature
/// weights q, averaged over the batch and the channels (1/C).
pub fn geometric_relative_loss(
    tape: &mut Tape,
    pred: &Tensor,
    truth: &Tensor,
    weights: &MetricWeights,
) -> Result<Tensor> {
    check_pair(pred, truth, weights)?;
    let q = lat_column(&weights.quad_w);
    let d = tape.sub(pred, truth)?;
    let d2 = tape.mul(&d, &d)?;
    let wd2 = tape.mul(&d2, &q)?;
    let num = {
        let s = tape.sum_axis(&wd2, 3)?;
        tape.sum_axis(&s, 2)?
    };
    let t2 = tape.mul(truth, truth)?;
    let wt2 = tape.mul(&t2, &q)?;
    let den = {
        let s = tape.sum_axis(&wt2, 3)?;
        tape.sum_axis(&s, 2)?
    };
    let channels = pred.shape()[1];
    if let Some(i) = den.values().iter().position(|&v| v == 0.0) {
        return Err(TrainError::ZeroDenominator {
            channel: i % channels,
        });
    }
    let inv = tape.powf(&den, -1.0)?;
    let ratio = tape.mul(&num, &inv)?;
    let rel = tape.sqrt(&ratio)?;
    Ok(tape.mean_all(&rel)?)
}

/// Latitude-weighted L2: mean over batch, channels and grid of
/// w_i (pred − truth)², with mean-1 cosine weights w.
pub fn latitude_weighted_l2(
    tape: &mut Tape,
    pred: &Tensor,
    truth: &Tensor,
    weights: &MetricWeights,
) -> Result<Tensor> {
    check_pair(pred, truth, weights)?;
    let w = lat_column(&weights.w);
    let d = tape.sub(pred, truth)?;
    let sq = tape.mul(&d, &d)?;
    let wsq = tape.mul(&sq, &w)?;
    Ok(tape.mean_all(&wsq)?)
}
