//! Packed spherical harmonic coefficient arrays.

use num_complex::Complex64;

use crate::error::{Result, ShtError};
use crate::truncation::Truncation;

/// Complex coefficients for m >= 0 in the flat layout of [`Truncation`],
/// channel-major. Coefficients of a real field obey
/// c_{n,-m} = (-1)^m conj(c_{n,m}), so m=0 entries are real up to round-off.
#[derive(Debug, Clone)]
pub struct SpectralCoeffs {
    trunc: Truncation,
    channels: usize,
    data: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(trunc: Truncation, channels: usize) -> Self {
        Self {
            trunc,
            channels,
            data: vec![Complex64::new(0.0, 0.0); channels * trunc.num_modes()],
        }
    }

    pub fn from_data(trunc: Truncation, channels: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != channels * trunc.num_modes() {
            return Err(ShtError::InvalidArgument(format!(
                "coefficient buffer has length {}, expected {}",
                data.len(),
                channels * trunc.num_modes()
            )));
        }
        Ok(Self {
            trunc,
            channels,
            data,
        })
    }

    pub fn trunc(&self) -> Truncation {
        self.trunc
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.trunc.num_modes();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.trunc.num_modes();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, n: usize, m: usize) -> Complex64 {
        self.data[c * self.trunc.num_modes() + self.trunc.index_of(n, m)]
    }

    pub fn set(&mut self, c: usize, n: usize, m: usize, v: Complex64) {
        let k = c * self.trunc.num_modes() + self.trunc.index_of(n, m);
        self.data[k] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn add_assign(&mut self, other: &SpectralCoeffs) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: f64, other: &SpectralCoeffs) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    fn check_compatible(&self, other: &SpectralCoeffs) -> Result<()> {
        if self.trunc != other.trunc {
            return Err(ShtError::TruncationMismatch(format!(
                "{:?} vs {:?}",
                self.trunc, other.trunc
            )));
        }
        if self.channels != other.channels {
            return Err(ShtError::ChannelMismatch {
                expected: self.channels,
                actual: other.channels,
            });
        }
        Ok(())
    }

    /// Copy into a different truncation: overlapping modes are kept, modes
    /// outside the target are dropped, modes new to the target are zero.
    pub fn truncate_to(&self, target: Truncation) -> SpectralCoeffs {
        let mut out = SpectralCoeffs::zeros(target, self.channels);
        let n_max = self.trunc.n_max().min(target.n_max());
        for c in 0..self.channels {
            for n in 0..=n_max {
                let m_hi = self.trunc.m_count(n).min(target.m_count(n));
                let src = c * self.trunc.num_modes() + self.trunc.degree_offset(n);
                let dst = c * target.num_modes() + target.degree_offset(n);
                out.data[dst..dst + m_hi].copy_from_slice(&self.data[src..src + m_hi]);
            }
        }
        out
    }

    /// Multiply every (n, m) mode by a function of the degree n, in place.
    /// This is how diagonal spectral operators (Laplacian, hyperdiffusion,
    /// integrating factors) are applied.
    pub fn scale_per_degree(&mut self, f: impl Fn(usize) -> f64) {
        let nm = self.trunc.num_modes();
        let mut factors = Vec::with_capacity(self.trunc.n_max() + 1);
        for n in 0..=self.trunc.n_max() {
            factors.push(f(n));
        }
        for c in 0..self.channels {
            for n in 0..=self.trunc.n_max() {
                let base = c * nm + self.trunc.degree_offset(n);
                let s = factors[n];
                for z in &mut self.data[base..base + self.trunc.m_count(n)] {
                    *z *= s;
                }
            }
        }
    }
}

/// Apply the Laplace-Beltrami operator on a sphere of the given radius:
/// each degree-n mode is scaled by -n(n+1)/radius^2.
pub fn spectral_laplacian(c: &SpectralCoeffs, radius: f64) -> SpectralCoeffs {
    let r2 = radius * radius;
    let mut out = c.clone();
    out.scale_per_degree(|n| -((n * (n + 1)) as f64) / r2);
    out
}

/// Inverse Laplacian. The n = 0 mode has no inverse and is set to zero,
/// fixing the arbitrary constant of the Poisson problem.
pub fn inverse_spectral_laplacian(c: &SpectralCoeffs, radius: f64) -> SpectralCoeffs {
    let r2 = radius * radius;
    let mut out = c.clone();
    out.scale_per_degree(|n| {
        if n == 0 {
            0.0
        } else {
            -r2 / ((n * (n + 1)) as f64)
        }
    });
    out
}

/// Energy in each total degree: E_n = sum_m mult(m) * |c_{n,m}|^2 / 2 with
/// mult(0) = 1 and mult(m>0) = 2 accounting for the conjugate modes.
/// Returns one spectrum per channel.
pub fn degree_spectrum(c: &SpectralCoeffs) -> Vec<Vec<f64>> {
    let t = c.trunc();
    let mut out = Vec::with_capacity(c.channels());
    for ch in 0..c.channels() {
        let data = c.channel(ch);
        let mut spec = vec![0.0; t.n_max() + 1];
        for n in 0..=t.n_max() {
            let base = t.degree_offset(n);
            let mut e = 0.5 * data[base].norm_sqr();
            for m in 1..t.m_count(n) {
                e += data[base + m].norm_sqr();
            }
            spec[n] = e;
        }
        out.push(spec);
    }
    out
}

/// Kinetic energy per degree from the spectra of the velocity components:
/// the u and v contributions simply add.
pub fn kinetic_energy_spectrum(u: &SpectralCoeffs, v: &SpectralCoeffs) -> Result<Vec<f64>> {
    if u.trunc() != v.trunc() || u.channels() != 1 || v.channels() != 1 {
        return Err(ShtError::InvalidArgument(
            "kinetic energy spectrum expects two single-channel coefficient sets on one truncation"
                .into(),
        ));
    }
    let eu = degree_spectrum(u);
    let ev = degree_spectrum(v);
    Ok(eu[0].iter().zip(&ev[0]).map(|(a, b)| a + b).collect())
}
