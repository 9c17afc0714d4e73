//! Spectral truncation and the packed (n, m) coefficient layout.

use crate::error::{Result, ShtError};

/// Retains degrees n <= n_max and orders 0 <= m <= min(n, m_max). Only
/// non-negative m is stored; for real fields the negative orders follow from
/// c_{n,-m} = (-1)^m conj(c_{n,m}).
///
/// Flat layout groups modes by degree: (0,0), (1,0), (1,1), (2,0), ...
/// so each degree occupies one contiguous block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    n_max: usize,
    m_max: usize,
}

impl Truncation {
    pub fn new(n_max: usize, m_max: usize) -> Result<Self> {
        if m_max > n_max {
            return Err(ShtError::InvalidArgument(format!(
                "m_max={m_max} exceeds n_max={n_max}"
            )));
        }
        if n_max > 1500 {
            return Err(ShtError::TruncationTooLarge(n_max));
        }
        Ok(Self { n_max, m_max })
    }

    pub fn triangular(n_max: usize) -> Result<Self> {
        Self::new(n_max, n_max)
    }

    /// Largest triangular truncation with unaliased quadratic products on an
    /// nlat-row Gaussian grid: n_max = floor((2*nlat - 1) / 3).
    pub fn for_quadratic_grid(nlat: usize) -> Result<Self> {
        Self::triangular((2 * nlat - 1) / 3)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Number of stored orders for degree n.
    pub fn m_count(&self, n: usize) -> usize {
        n.min(self.m_max) + 1
    }

    /// Flat offset of the (n, 0) mode.
    pub fn degree_offset(&self, n: usize) -> usize {
        if n <= self.m_max {
            n * (n + 1) / 2
        } else {
            let full = (self.m_max + 1) * (self.m_max + 2) / 2;
            full + (n - self.m_max - 1) * (self.m_max + 1)
        }
    }

    pub fn index_of(&self, n: usize, m: usize) -> usize {
        debug_assert!(n <= self.n_max && m <= n.min(self.m_max));
        self.degree_offset(n) + m
    }

    pub fn num_modes(&self) -> usize {
        self.degree_offset(self.n_max) + self.m_count(self.n_max)
    }

    pub fn contains(&self, n: usize, m: usize) -> bool {
        n <= self.n_max && m <= n.min(self.m_max)
    }

    /// Modes in flat-index order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.n_max).flat_map(move |n| (0..self.m_count(n)).map(move |m| (n, m)))
    }

    pub fn fits_grid(&self, nlat: usize, nlon: usize) -> bool {
        nlat >= self.n_max + 1 && nlon >= 2 * self.m_max + 1
    }
}
