//! Forward/inverse spherical harmonic transforms and the spectral wind
//! relations, all bound to one grid + truncation pair.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Result, ShtError};
use crate::grid::{GridField, SphericalGrid};
use crate::legendre::{legendre_deriv_table, legendre_table, LegendreTable};
use crate::spectral::{inverse_spectral_laplacian, SpectralCoeffs};
use crate::truncation::Truncation;

/// Transform plan: Legendre tables are precomputed once, FFT plans live on
/// the grid. Analysis uses Gauss-Legendre quadrature in latitude and an FFT
/// in longitude, so band-limited fields round-trip to near machine precision.
#[derive(Debug)]
pub struct Sht {
    grid: Arc<SphericalGrid>,
    trunc: Truncation,
    p: LegendreTable,
    /// (1 - mu^2) dPbar/dmu, used by the wind relations.
    g: LegendreTable,
}

impl Sht {
    pub fn new(grid: Arc<SphericalGrid>, trunc: Truncation) -> Result<Self> {
        if !trunc.fits_grid(grid.nlat(), grid.nlon()) {
            return Err(ShtError::GridTruncationMismatch {
                nlat: grid.nlat(),
                nlon: grid.nlon(),
                n_max: trunc.n_max(),
                m_max: trunc.m_max(),
            });
        }
        let p = legendre_table(trunc, grid.colat_nodes())?;
        let g = legendre_deriv_table(trunc, grid.colat_nodes())?;
        Ok(Self { grid, trunc, p, g })
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    fn check_grid(&self, f: &GridField) -> Result<()> {
        if !f.grid().same_geometry(&self.grid) {
            return Err(ShtError::GridMismatch(format!(
                "field on {:?}, plan on {:?}",
                f.grid(),
                self.grid
            )));
        }
        Ok(())
    }

    fn check_trunc(&self, c: &SpectralCoeffs) -> Result<()> {
        if c.trunc() != self.trunc {
            return Err(ShtError::TruncationMismatch(format!(
                "coefficients on {:?}, plan on {:?}",
                c.trunc(),
                self.trunc
            )));
        }
        Ok(())
    }

    /// FFT each latitude row and keep orders 0..=m_max, scaled per row.
    /// Output layout: fm[m * nlat + i].
    fn fourier_rows(&self, data: &[f64], row_scale: impl Fn(usize) -> f64) -> Vec<Complex64> {
        let (nlat, nlon) = (self.grid.nlat(), self.grid.nlon());
        let m_max = self.trunc.m_max();
        let fft = self.grid.fft_fwd();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut buf = vec![Complex64::default(); nlon];
        let mut fm = vec![Complex64::default(); (m_max + 1) * nlat];
        for i in 0..nlat {
            for (b, &v) in buf.iter_mut().zip(&data[i * nlon..(i + 1) * nlon]) {
                *b = Complex64::new(v, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            let s = row_scale(i);
            for m in 0..=m_max {
                fm[m * nlat + i] = buf[m] * s;
            }
        }
        fm
    }

    /// Inverse FFT per latitude row from per-order values gm[m * nlat + i].
    /// With `double` set, negative orders are filled by conjugate symmetry
    /// (the synthesis of a real field); otherwise only m >= 0 contributes.
    fn rows_to_grid(
        &self,
        gm: &[Complex64],
        double: bool,
        row_scale: impl Fn(usize) -> f64,
        out: &mut [f64],
    ) {
        let (nlat, nlon) = (self.grid.nlat(), self.grid.nlon());
        let m_max = self.trunc.m_max();
        let fft = self.grid.fft_inv();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut buf = vec![Complex64::default(); nlon];
        for i in 0..nlat {
            buf.fill(Complex64::default());
            buf[0] = gm[i];
            for m in 1..=m_max {
                let z = gm[m * nlat + i];
                buf[m] = z;
                if double {
                    buf[nlon - m] = z.conj();
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            let s = row_scale(i);
            for (o, b) in out[i * nlon..(i + 1) * nlon].iter_mut().zip(&buf) {
                *o = b.re * s;
            }
        }
    }

    /// c_nm = sum_i table(m,n,i) * fm[m,i], optionally times the conjugate
    /// multiplicity (1 for m = 0, 2 otherwise).
    fn legendre_contract(
        &self,
        table: &LegendreTable,
        fm: &[Complex64],
        apply_mult: bool,
        out: &mut [Complex64],
    ) {
        let nlat = self.grid.nlat();
        for (n, m) in self.trunc.modes() {
            let row = table.row(m, n);
            let col = &fm[m * nlat..(m + 1) * nlat];
            let mut re = 0.0;
            let mut im = 0.0;
            for (p, z) in row.iter().zip(col) {
                re += p * z.re;
                im += p * z.im;
            }
            let mult = if apply_mult && m > 0 { 2.0 } else { 1.0 };
            out[self.trunc.index_of(n, m)] = Complex64::new(mult * re, mult * im);
        }
    }

    /// gm[m,i] = sum_n coeffs_nm * table(m,n,i).
    fn legendre_expand(&self, table: &LegendreTable, coeffs: &[Complex64]) -> Vec<Complex64> {
        let nlat = self.grid.nlat();
        let m_max = self.trunc.m_max();
        let mut gm = vec![Complex64::default(); (m_max + 1) * nlat];
        for (n, m) in self.trunc.modes() {
            let c = coeffs[self.trunc.index_of(n, m)];
            let row = table.row(m, n);
            let col = &mut gm[m * nlat..(m + 1) * nlat];
            for (g, p) in col.iter_mut().zip(row) {
                g.re += c.re * p;
                g.im += c.im * p;
            }
        }
        gm
    }

    /// Analysis: quadrature projection onto the orthonormal harmonics.
    pub fn forward(&self, f: &GridField) -> Result<SpectralCoeffs> {
        self.check_grid(f)?;
        let w = self.grid.quad_weights();
        let lon_scale = 2.0 * std::f64::consts::PI / self.grid.nlon() as f64;
        let mut out = SpectralCoeffs::zeros(self.trunc, f.channels());
        for c in 0..f.channels() {
            let fm = self.fourier_rows(f.channel(c), |i| w[i] * lon_scale);
            self.legendre_contract(&self.p, &fm, false, out.channel_mut(c));
        }
        Ok(out)
    }

    /// Synthesis: evaluate the truncated expansion on the grid.
    pub fn inverse(&self, c: &SpectralCoeffs) -> Result<GridField> {
        self.check_trunc(c)?;
        let mut out = GridField::zeros(Arc::clone(&self.grid), c.channels());
        for ch in 0..c.channels() {
            let gm = self.legendre_expand(&self.p, c.channel(ch));
            let (nlat, nlon) = (self.grid.nlat(), self.grid.nlon());
            let dst = &mut out.values_mut()[ch * nlat * nlon..(ch + 1) * nlat * nlon];
            self.rows_to_grid(&gm, true, |_| 1.0, dst);
        }
        Ok(out)
    }

    /// Transpose of [`Sht::forward`] viewed as a real-linear map into
    /// (re, im) coefficient pairs. Used to backpropagate through analysis.
    pub fn forward_adjoint(&self, cbar: &SpectralCoeffs) -> Result<GridField> {
        self.check_trunc(cbar)?;
        let w = self.grid.quad_weights();
        let lon_scale = 2.0 * std::f64::consts::PI / self.grid.nlon() as f64;
        let mut out = GridField::zeros(Arc::clone(&self.grid), cbar.channels());
        for ch in 0..cbar.channels() {
            let gm = self.legendre_expand(&self.p, cbar.channel(ch));
            let (nlat, nlon) = (self.grid.nlat(), self.grid.nlon());
            let dst = &mut out.values_mut()[ch * nlat * nlon..(ch + 1) * nlat * nlon];
            self.rows_to_grid(&gm, false, |i| w[i] * lon_scale, dst);
        }
        Ok(out)
    }

    /// Transpose of [`Sht::inverse`]: unweighted analysis carrying the
    /// conjugate multiplicity. Used to backpropagate through synthesis.
    pub fn inverse_adjoint(&self, fbar: &GridField) -> Result<SpectralCoeffs> {
        self.check_grid(fbar)?;
        let mut out = SpectralCoeffs::zeros(self.trunc, fbar.channels());
        for c in 0..fbar.channels() {
            let fm = self.fourier_rows(fbar.channel(c), |_| 1.0);
            self.legendre_contract(&self.p, &fm, true, out.channel_mut(c));
        }
        Ok(out)
    }

    /// Winds from vorticity and divergence via streamfunction/velocity
    /// potential: psi = laplacian^-1 zeta, chi = laplacian^-1 delta, then
    ///   u cos(lat) = (1/a) (d chi/d lon - (1 - mu^2) d psi/d mu)
    ///   v cos(lat) = (1/a) (d psi/d lon + (1 - mu^2) d chi/d mu).
    pub fn uv_from_vortdiv(
        &self,
        zeta: &SpectralCoeffs,
        delta: &SpectralCoeffs,
    ) -> Result<(GridField, GridField)> {
        self.check_trunc(zeta)?;
        self.check_trunc(delta)?;
        if zeta.channels() != 1 || delta.channels() != 1 {
            return Err(ShtError::InvalidArgument(
                "wind relations act on single-channel coefficient sets".into(),
            ));
        }
        let a = self.grid.radius();
        let psi = inverse_spectral_laplacian(zeta, a);
        let chi = inverse_spectral_laplacian(delta, a);
        let psi_p = self.legendre_expand(&self.p, psi.channel(0));
        let psi_g = self.legendre_expand(&self.g, psi.channel(0));
        let chi_p = self.legendre_expand(&self.p, chi.channel(0));
        let chi_g = self.legendre_expand(&self.g, chi.channel(0));

        let nlat = self.grid.nlat();
        let m_max = self.trunc.m_max();
        let mut um = vec![Complex64::default(); (m_max + 1) * nlat];
        let mut vm = vec![Complex64::default(); (m_max + 1) * nlat];
        for m in 0..=m_max {
            let im = Complex64::new(0.0, m as f64);
            for i in 0..nlat {
                let k = m * nlat + i;
                um[k] = (im * chi_p[k] - psi_g[k]) / a;
                vm[k] = (im * psi_p[k] + chi_g[k]) / a;
            }
        }
        let mut u = GridField::zeros(Arc::clone(&self.grid), 1);
        let mut v = GridField::zeros(Arc::clone(&self.grid), 1);
        // Divide out cos(lat); safe because Gaussian nodes avoid the poles.
        let inv_cos: Vec<f64> = (0..nlat).map(|i| 1.0 / self.grid.cos_lat(i)).collect();
        self.rows_to_grid(&um, true, |i| inv_cos[i], u.values_mut());
        self.rows_to_grid(&vm, true, |i| inv_cos[i], v.values_mut());
        Ok((u, v))
    }

    /// Vorticity and divergence of a wind field, computed in the quadrature
    /// (integration-by-parts) form so no grid derivatives are taken:
    ///   zeta_nm  = (1/a) ( i m P[v / cos] + G[u / cos] )
    ///   delta_nm = (1/a) ( i m P[u / cos] - G[v / cos] )
    /// where P is plain analysis and G analysis against (1-mu^2) dPbar/dmu.
    pub fn vortdiv_from_uv(
        &self,
        u: &GridField,
        v: &GridField,
    ) -> Result<(SpectralCoeffs, SpectralCoeffs)> {
        self.check_grid(u)?;
        self.check_grid(v)?;
        if u.channels() != 1 || v.channels() != 1 {
            return Err(ShtError::InvalidArgument(
                "wind relations act on single-channel fields".into(),
            ));
        }
        let (nlat, nlon) = (self.grid.nlat(), self.grid.nlon());
        let a = self.grid.radius();
        let w = self.grid.quad_weights();
        let lon_scale = 2.0 * std::f64::consts::PI / nlon as f64;

        let scale_rows = |f: &GridField| -> Vec<f64> {
            let mut s = vec![0.0; nlat * nlon];
            for i in 0..nlat {
                let inv_cos = 1.0 / self.grid.cos_lat(i);
                for j in 0..nlon {
                    s[i * nlon + j] = f.value(0, i, j) * inv_cos;
                }
            }
            s
        };
        let au = self.fourier_rows(&scale_rows(u), |i| w[i] * lon_scale);
        let av = self.fourier_rows(&scale_rows(v), |i| w[i] * lon_scale);

        let mut zeta = SpectralCoeffs::zeros(self.trunc, 1);
        let mut delta = SpectralCoeffs::zeros(self.trunc, 1);
        for (n, m) in self.trunc.modes() {
            let row_p = self.p.row(m, n);
            let row_g = self.g.row(m, n);
            let cu = &au[m * nlat..(m + 1) * nlat];
            let cv = &av[m * nlat..(m + 1) * nlat];
            let mut pu = Complex64::default();
            let mut pv = Complex64::default();
            let mut gu = Complex64::default();
            let mut gv = Complex64::default();
            for i in 0..nlat {
                pu += row_p[i] * cu[i];
                pv += row_p[i] * cv[i];
                gu += row_g[i] * cu[i];
                gv += row_g[i] * cv[i];
            }
            let im = Complex64::new(0.0, m as f64);
            zeta.set(0, n, m, (im * pv + gu) / a);
            delta.set(0, n, m, (im * pu - gv) / a);
        }
        Ok((zeta, delta))
    }
}

/// Spectral resampling between grids: analyze on the source plan, move the
/// coefficients to the target truncation (dropping or zero-filling modes),
/// synthesize on the target plan. Each channel is treated as a scalar.
pub fn resample(f: &GridField, from: &Sht, to: &Sht) -> Result<GridField> {
    let c = from.forward(f)?;
    to.inverse(&c.truncate_to(to.trunc()))
}
