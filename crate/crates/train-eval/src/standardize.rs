//! Per-channel standardization of gridded snapshots.

use crate::error::{Result, TrainError};

/// Per-channel affine map x ↦ (x − mean) / std fitted on training data.
/// Models train in standardized space; physical-space metrics go through
/// [`Standardizer::invert`] first.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// No-op standardizer (mean 0, std 1) for raw-space work.
    pub fn identity(channels: usize) -> Self {
        Standardizer {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Fit per-channel moments over snapshots laid out as (channel, lat,
    /// lon). A channel with zero variance keeps std = 1 so constant fields
    /// standardize to exactly zero instead of dividing by zero.
    pub fn fit<'a>(
        snapshots: impl IntoIterator<Item = &'a [f64]> + Clone,
        channels: usize,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(TrainError::InvalidArgument(
                "standardizer needs at least one channel".into(),
            ));
        }
        let mut sum = vec![0.0; channels];
        let mut count = 0usize;
        let mut field_len = None;
        for snap in snapshots.clone() {
            let fl = per_channel_len(snap.len(), channels, field_len)?;
            field_len = Some(fl);
            for (c, block) in snap.chunks_exact(fl).enumerate() {
                for v in block {
                    sum[c] += v;
                }
            }
            count += fl;
        }
        if count == 0 {
            return Err(TrainError::InvalidArgument(
                "standardizer needs at least one snapshot".into(),
            ));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; channels];
        for snap in snapshots {
            let fl = field_len.expect("seen above");
            for (c, block) in snap.chunks_exact(fl).enumerate() {
                for v in block {
                    let d = v - mean[c];
                    var[c] += d * d;
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s == 0.0 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    /// Standardize a buffer of one or more snapshots in place. `field_len`
    /// is the per-channel block length (nlat·nlon); the buffer must be a
    /// whole number of (channels · field_len) snapshots.
    pub fn apply(&self, buf: &mut [f64], field_len: usize) -> Result<()> {
        self.map(buf, field_len, |v, m, s| (v - m) / s)
    }

    /// Undo [`apply`] in place.
    pub fn invert(&self, buf: &mut [f64], field_len: usize) -> Result<()> {
        self.map(buf, field_len, |v, m, s| v * s + m)
    }

    fn map(
        &self,
        buf: &mut [f64],
        field_len: usize,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<()> {
        let c = self.channels();
        if field_len == 0 || buf.len() % (c * field_len) != 0 {
            return Err(TrainError::InvalidArgument(format!(
                "buffer of {} values is not a whole number of {}-channel snapshots of {} cells",
                buf.len(),
                c,
                field_len
            )));
        }
        for (k, block) in buf.chunks_exact_mut(field_len).enumerate() {
            let ch = k % c;
            for v in block {
                *v = f(*v, self.mean[ch], self.std[ch]);
            }
        }
        Ok(())
    }
}

fn per_channel_len(total: usize, channels: usize, expected: Option<usize>) -> Result<usize> {
    if total == 0 || total % channels != 0 {
        return Err(TrainError::InvalidArgument(format!(
            "snapshot of {total} values does not split into {channels} channels"
        )));
    }
    let fl = total / channels;
    if let Some(e) = expected {
        if e != fl {
            return Err(TrainError::InvalidArgument(
                "snapshots must all share one shape".into(),
            ));
        }
    }
    Ok(fl)
}
