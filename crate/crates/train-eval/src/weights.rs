//! Latitude weighting for losses and verification metrics.

use sht_core::SphericalGrid;

/// Per-latitude weighting factors.
///
/// `w` is the cosine-latitude factor `w_i = cos(lat_i) / mean_j cos(lat_j)`,
/// normalized so `mean(w) = 1`; it enters the pointwise metrics (weighted
/// L2, RMSE, ACC). `quad_w` are the quadrature weights of the grid, which
/// already encode the latitudinal area element; they weight the geometric
/// relative norm.
#[derive(Debug, Clone)]
pub struct MetricWeights {
    pub w: Vec<f64>,
    pub quad_w: Vec<f64>,
}

impl MetricWeights {
    /// Build the cosine weighting from explicit latitudes (radians). The
    /// quadrature slot falls back to the raw cosines, the latitudinal
    /// Jacobian, which is exact only up to normalization; grids with true
    /// quadrature rules should go through [`latitude_weights`] instead.
    pub fn from_lats_rad(lats: &[f64]) -> Self {
        let cosines: Vec<f64> = lats.iter().map(|l| l.cos()).collect();
        let mean = cosines.iter().sum::<f64>() / cosines.len().max(1) as f64;
        MetricWeights {
            w: cosines.iter().map(|c| c / mean).collect(),
            quad_w: cosines,
        }
    }

    pub fn nlat(&self) -> usize {
        self.w.len()
    }
}

/// Latitude weights of a Gaussian grid: cosine factors normalized to mean 1,
/// plus the grid's Gauss-Legendre quadrature weights.
pub fn latitude_weights(grid: &SphericalGrid) -> MetricWeights {
    let mut mw = MetricWeights::from_lats_rad(grid.lats_rad());
    mw.quad_w = grid.quad_weights().to_vec();
    mw
}
