//! Gaussian grids on the sphere and real scalar fields living on them.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Result, ShtError};
use crate::quadrature::gauss_legendre;

/// A latitude-longitude grid with Gauss-Legendre latitudes and equally
/// spaced longitudes starting at 0. Latitudes run north to south.
pub struct SphericalGrid {
    nlat: usize,
    nlon: usize,
    /// mu = sin(latitude) = cos(colatitude) at each row, descending.
    colat_nodes: Vec<f64>,
    /// Gauss-Legendre weights; sum to 2.
    quad_weights: Vec<f64>,
    lats_rad: Vec<f64>,
    lons_rad: Vec<f64>,
    radius: f64,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl SphericalGrid {
    pub fn gaussian(nlat: usize, nlon: usize, radius: f64) -> Result<Self> {
        if nlat == 0 || nlon < 4 {
            return Err(ShtError::InvalidArgument(format!(
                "grid {nlat}x{nlon} too small: need nlat >= 1 and nlon >= 4"
            )));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(ShtError::InvalidArgument(format!(
                "radius must be positive and finite, got {radius}"
            )));
        }
        let (colat_nodes, quad_weights) = gauss_legendre(nlat)?;
        let lats_rad: Vec<f64> = colat_nodes.iter().map(|&mu| mu.asin()).collect();
        let lons_rad: Vec<f64> = (0..nlon)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / nlon as f64)
            .collect();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(nlon);
        let fft_inv = planner.plan_fft_inverse(nlon);
        Ok(Self {
            nlat,
            nlon,
            colat_nodes,
            quad_weights,
            lats_rad,
            lons_rad,
            radius,
            fft_fwd,
            fft_inv,
        })
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    /// sin(latitude) at each row, descending from north to south.
    pub fn colat_nodes(&self) -> &[f64] {
        &self.colat_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn lats_rad(&self) -> &[f64] {
        &self.lats_rad
    }

    pub fn lons_rad(&self) -> &[f64] {
        &self.lons_rad
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// cos(latitude) at row i. Strictly positive on a Gaussian grid: the
    /// nodes are roots of a Legendre polynomial and never reach the poles.
    pub fn cos_lat(&self, i: usize) -> f64 {
        (1.0 - self.colat_nodes[i] * self.colat_nodes[i]).sqrt()
    }

    pub fn same_geometry(&self, other: &SphericalGrid) -> bool {
        self.nlat == other.nlat && self.nlon == other.nlon && self.radius == other.radius
    }

    pub(crate) fn fft_fwd(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_fwd
    }

    pub(crate) fn fft_inv(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_inv
    }

    /// Area element of cell (i, j) divided by radius^2, i.e. w_i * 2*pi/nlon.
    /// Summed over the grid this gives 4*pi.
    pub fn area_weight(&self, i: usize) -> f64 {
        self.quad_weights[i] * 2.0 * std::f64::consts::PI / self.nlon as f64
    }
}

impl fmt::Debug for SphericalGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphericalGrid")
            .field("nlat", &self.nlat)
            .field("nlon", &self.nlon)
            .field("radius", &self.radius)
            .finish()
    }
}

impl Clone for SphericalGrid {
    fn clone(&self) -> Self {
        Self {
            nlat: self.nlat,
            nlon: self.nlon,
            colat_nodes: self.colat_nodes.clone(),
            quad_weights: self.quad_weights.clone(),
            lats_rad: self.lats_rad.clone(),
            lons_rad: self.lons_rad.clone(),
            radius: self.radius,
            fft_fwd: Arc::clone(&self.fft_fwd),
            fft_inv: Arc::clone(&self.fft_inv),
        }
    }
}

/// A real multi-channel field sampled on a [`SphericalGrid`], stored
/// channel-major as (channel, lat, lon).
#[derive(Debug, Clone)]
pub struct GridField {
    grid: Arc<SphericalGrid>,
    channels: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Arc<SphericalGrid>, channels: usize) -> Self {
        let n = channels * grid.nlat() * grid.nlon();
        Self {
            grid,
            channels,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(grid: Arc<SphericalGrid>, channels: usize, values: Vec<f64>) -> Result<Self> {
        let expect = channels * grid.nlat() * grid.nlon();
        if values.len() != expect {
            return Err(ShtError::InvalidArgument(format!(
                "value buffer has length {}, expected {}",
                values.len(),
                expect
            )));
        }
        Ok(Self {
            grid,
            channels,
            values,
        })
    }

    /// Build a single-channel field from a closure of (latitude, longitude) in radians.
    pub fn from_fn(grid: Arc<SphericalGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let (nlat, nlon) = (grid.nlat(), grid.nlon());
        let mut values = Vec::with_capacity(nlat * nlon);
        for i in 0..nlat {
            let lat = grid.lats_rad()[i];
            for j in 0..nlon {
                values.push(f(lat, grid.lons_rad()[j]));
            }
        }
        Self {
            grid,
            channels: 1,
            values,
        }
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.nlat() * self.grid.nlon();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.nlat() * self.grid.nlon();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn value(&self, c: usize, i: usize, j: usize) -> f64 {
        self.values[(c * self.grid.nlat() + i) * self.grid.nlon() + j]
    }

    pub fn value_mut(&mut self, c: usize, i: usize, j: usize) -> &mut f64 {
        &mut self.values[(c * self.grid.nlat() + i) * self.grid.nlon() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Area-weighted mean over the sphere, per channel.
    pub fn area_mean(&self, c: usize) -> f64 {
        let (nlat, nlon) = (self.grid.nlat(), self.grid.nlon());
        let mut acc = 0.0;
        for i in 0..nlat {
            let w = self.grid.area_weight(i);
            let row = &self.channel(c)[i * nlon..(i + 1) * nlon];
            acc += w * row.iter().sum::<f64>();
        }
        acc / (4.0 * std::f64::consts::PI)
    }
}
