//! Verification metrics on grid fields (plain values, no tape).

use crate::error::{Result, TrainError};
use crate::weights::MetricWeights;
use sht_core::GridField;
use std::sync::Arc;

fn check_fields(a: &GridField, b: &GridField, what: &str) -> Result<()> {
    if !a.grid().same_geometry(b.grid()) || a.channels() != b.channels() {
        return Err(TrainError::InvalidArgument(format!(
            "{what}: fields live on different grids or channel counts"
        )));
    }
    Ok(())
}

fn check_pool(forecasts: &[GridField], truths: &[GridField], weights: &MetricWeights) -> Result<()> {
    if forecasts.len() != truths.len() || forecasts.is_empty() {
        return Err(TrainError::InvalidArgument(format!(
            "need equally many forecasts and truths, got {} and {}",
            forecasts.len(),
            truths.len()
        )));
    }
    for (f, t) in forecasts.iter().zip(truths) {
        check_fields(f, t, "metric pool")?;
        check_fields(f, &forecasts[0], "metric pool")?;
        if f.grid().nlat() != weights.nlat() {
            return Err(TrainError::InvalidArgument(format!(
                "fields have {} latitudes but the weights have {}",
                f.grid().nlat(),
                weights.nlat()
            )));
        }
    }
    Ok(())
}

/// Latitude-weighted RMSE per variable: the mean over forecasts of the
/// per-forecast root-mean-square error (the square root sits inside the
/// forecast mean),
/// RMSE_v = 1/N Σ_f sqrt( 1/(H·W) Σ_ij w_i (f − t)² ).
pub fn rmse(
    forecasts: &[GridField],
    truths: &[GridField],
    weights: &MetricWeights,
) -> Result<Vec<f64>> {
    check_pool(forecasts, truths, weights)?;
    let grid = forecasts[0].grid();
    let (h, w) = (grid.nlat(), grid.nlon());
    let channels = forecasts[0].channels();
    let mut out = vec![0.0; channels];
    for (f, t) in forecasts.iter().zip(truths) {
        for v in 0..channels {
            let (fc, tc) = (f.channel(v), t.channel(v));
            let mut s = 0.0;
            for i in 0..h {
                let wi = weights.w[i];
                for j in 0..w {
                    let d = fc[i * w + j] - tc[i * w + j];
                    s += wi * d * d;
                }
            }
            out[v] += (s / (h * w) as f64).sqrt();
        }
    }
    for o in &mut out {
        *o /= forecasts.len() as f64;
    }
    Ok(out)
}

/// Anomaly correlation coefficient per variable, pooled over all forecasts
/// and grid points in a single ratio. Anomalies (the primed quantities) are
/// deviations from the supplied climatology.
pub fn acc(
    forecasts: &[GridField],
    truths: &[GridField],
    climatology: &GridField,
    weights: &MetricWeights,
) -> Result<Vec<f64>> {
    check_pool(forecasts, truths, weights)?;
    check_fields(climatology, &forecasts[0], "climatology")?;
    let grid = forecasts[0].grid();
    let (h, w) = (grid.nlat(), grid.nlon());
    let channels = forecasts[0].channels();
    let mut out = Vec::with_capacity(channels);
    for v in 0..channels {
        let clim = climatology.channel(v);
        let (mut num, mut f2, mut t2) = (0.0, 0.0, 0.0);
        for (f, t) in forecasts.iter().zip(truths) {
            let (fc, tc) = (f.channel(v), t.channel(v));
            for i in 0..h {
                let wi = weights.w[i];
                for j in 0..w {
                    let fp = fc[i * w + j] - clim[i * w + j];
                    let tp = tc[i * w + j] - clim[i * w + j];
                    num += wi * fp * tp;
                    f2 += wi * fp * fp;
                    t2 += wi * tp * tp;
                }
            }
        }
        if f2 == 0.0 || t2 == 0.0 {
            return Err(TrainError::ZeroAnomalyVariance { variable: v });
        }
        out.push(num / (f2 * t2).sqrt());
    }
    Ok(out)
}

/// Pointwise time mean of the truth pool, the reference for ACC anomalies.
pub fn climatology(pool: &[GridField]) -> Result<GridField> {
    if pool.is_empty() {
        return Err(TrainError::InvalidArgument(
            "climatology needs at least one truth field".into(),
        ));
    }
    for f in pool {
        check_fields(f, &pool[0], "climatology pool")?;
    }
    let mut mean = vec![0.0; pool[0].values().len()];
    for f in pool {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    let n = pool.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(GridField::from_values(
        Arc::clone(pool[0].grid()),
        pool[0].channels(),
        mean,
    )?)
}

/// Geometric relative norm per variable (quadrature-weighted):
/// sqrt(Σ q |pred − truth|² / Σ q |truth|²).
pub fn relative_loss_per_variable(
    pred: &GridField,
    truth: &GridField,
    weights: &MetricWeights,
) -> Result<Vec<f64>> {
    check_fields(pred, truth, "relative loss")?;
    let grid = pred.grid();
    let (h, w) = (grid.nlat(), grid.nlon());
    if h != weights.nlat() {
        return Err(TrainError::InvalidArgument(format!(
            "fields have {} latitudes but the weights have {}",
            h,
            weights.nlat()
        )));
    }
    let mut out = Vec::with_capacity(pred.channels());
    for v in 0..pred.channels() {
        let (pc, tc) = (pred.channel(v), truth.channel(v));
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..h {
            let qi = weights.quad_w[i];
            for j in 0..w {
                let d = pc[i * w + j] - tc[i * w + j];
                num += qi * d * d;
                den += qi * tc[i * w + j] * tc[i * w + j];
            }
        }
        if den == 0.0 {
            return Err(TrainError::ZeroDenominator { channel: v });
        }
        out.push((num / den).sqrt());
    }
    Ok(out)
}
