//! Normalized associated Legendre tables.
//!
//! Normalization matches orthonormal spherical harmonics with the
//! Condon-Shortley phase: Y_nm = Pbar_nm(mu) exp(i m lon), so
//! 2*pi * sum_i w_i Pbar_nm(x_i) Pbar_n'm(x_i) = delta_nn' on a Gaussian
//! grid that resolves the product. Pbar_00 = 1/sqrt(4*pi).

use crate::error::{Result, ShtError};
use crate::truncation::Truncation;

/// Values of Pbar_nm (or a derived quantity) at a fixed set of nodes,
/// stored per order m as contiguous rows of length nlat for n = m..=n_max.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    n_max: usize,
    m_max: usize,
    nlat: usize,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl LegendreTable {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    /// Node values for mode (n, m), length nlat.
    pub fn row(&self, m: usize, n: usize) -> &[f64] {
        debug_assert!(m <= self.m_max && n >= m && n <= self.n_max);
        let k = self.offsets[m] + (n - m) * self.nlat;
        &self.values[k..k + self.nlat]
    }

    pub fn value(&self, m: usize, n: usize, i: usize) -> f64 {
        self.row(m, n)[i]
    }

    fn alloc(n_max: usize, m_max: usize, nlat: usize) -> Self {
        let mut offsets = Vec::with_capacity(m_max + 1);
        let mut total = 0usize;
        for m in 0..=m_max {
            offsets.push(total);
            total += (n_max - m + 1) * nlat;
        }
        Self {
            n_max,
            m_max,
            nlat,
            offsets,
            values: vec![0.0; total],
        }
    }
}

/// Scale x by 2^e, saturating to zero or infinity outside the exponent range.
fn ldexp(x: f64, mut e: i64) -> f64 {
    let mut v = x;
    while e > 600 {
        v *= 2f64.powi(600);
        e -= 600;
    }
    while e < -600 {
        v *= 2f64.powi(-600);
        e += 600;
    }
    v * 2f64.powi(e as i32)
}

const RESCALE_LO: f64 = 1e-150; // roughly 2^-498
const RESCALE_SHIFT: i64 = 500;

/// Pbar_nm at the given nodes for every mode of the truncation.
///
/// Sectoral seeds shrink like sin(colat)^m, so they are carried as a
/// (mantissa, power-of-two) pair and renormalized on the fly; plain f64
/// would flush to zero near the poles long before m_max on large grids.
pub fn legendre_table(trunc: Truncation, nodes: &[f64]) -> Result<LegendreTable> {
    build_table(trunc.n_max(), trunc.m_max(), nodes)
}

fn build_table(n_max: usize, m_max: usize, nodes: &[f64]) -> Result<LegendreTable> {
    // One degree of headroom so derivative tables work at the n_max = 1500 cap.
    if n_max > 1501 {
        return Err(ShtError::TruncationTooLarge(n_max));
    }
    if nodes.iter().any(|x| x.abs() >= 1.0) {
        return Err(ShtError::InvalidArgument(
            "Legendre nodes must satisfy |x| < 1".into(),
        ));
    }
    let nlat = nodes.len();
    let mut table = LegendreTable::alloc(n_max, m_max, nlat);

    // Sectoral values Pbar_mm per node, tracked as value * 2^exp.
    let mut seed_v = vec![1.0 / (4.0 * std::f64::consts::PI).sqrt(); nlat];
    let mut seed_e = vec![0i64; nlat];

    for m in 0..=m_max {
        if m > 0 {
            let ratio = -((2.0 * m as f64 + 1.0) / (2.0 * m as f64)).sqrt();
            for i in 0..nlat {
                let s = (1.0 - nodes[i] * nodes[i]).sqrt();
                seed_v[i] *= ratio * s;
                if seed_v[i].abs() < RESCALE_LO && seed_v[i] != 0.0 {
                    seed_v[i] = ldexp(seed_v[i], RESCALE_SHIFT);
                    seed_e[i] -= RESCALE_SHIFT;
                }
            }
        }
        let base = table.offsets[m];
        for i in 0..nlat {
            let x = nodes[i];
            let mut pm2 = seed_v[i]; // Pbar_{n-2, m}, scaled
            let mut e = seed_e[i];
            table.values[base + i] = ldexp(pm2, e);
            if m == n_max {
                continue;
            }
            let mut pm1 = (2.0 * m as f64 + 3.0).sqrt() * x * pm2; // Pbar_{m+1, m}
            table.values[base + nlat + i] = ldexp(pm1, e);
            for n in (m + 2)..=n_max {
                let nf = n as f64;
                let mf = m as f64;
                let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
                let b = (((nf - 1.0) * (nf - 1.0) - mf * mf)
                    / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                    .sqrt();
                let p = a * (x * pm1 - b * pm2);
                pm2 = pm1;
                pm1 = p;
                if pm1.abs() < RESCALE_LO && pm1 != 0.0 && e != 0 {
                    // Only renormalize while still carrying a deficit; once
                    // e reaches 0 the values are genuinely small, not scaled.
                    pm1 = ldexp(pm1, RESCALE_SHIFT);
                    pm2 = ldexp(pm2, RESCALE_SHIFT);
                    e -= RESCALE_SHIFT;
                } else if pm1.abs() > 1e150 {
                    pm1 = ldexp(pm1, -RESCALE_SHIFT);
                    pm2 = ldexp(pm2, -RESCALE_SHIFT);
                    e += RESCALE_SHIFT;
                }
                table.values[base + (n - m) * nlat + i] = ldexp(pm1, e);
            }
        }
    }
    Ok(table)
}

/// G_nm(mu) = (1 - mu^2) d/dmu Pbar_nm(mu), from the degree-coupling identity
/// G_nm = (n+1) eps_nm Pbar_{n-1,m} - n eps_{n+1,m} Pbar_{n+1,m},
/// eps_nm = sqrt((n^2 - m^2) / (4 n^2 - 1)).
pub fn legendre_deriv_table(trunc: Truncation, nodes: &[f64]) -> Result<LegendreTable> {
    let n_max = trunc.n_max();
    let m_max = trunc.m_max();
    // Needs Pbar one degree past the truncation.
    let p = build_table(n_max + 1, m_max, nodes)?;
    let nlat = nodes.len();
    let mut table = LegendreTable::alloc(n_max, m_max, nlat);
    for m in 0..=m_max {
        for n in m..=n_max {
            let eps = |n: usize| -> f64 {
                let nf = n as f64;
                let mf = m as f64;
                ((nf * nf - mf * mf) / (4.0 * nf * nf - 1.0)).sqrt()
            };
            let hi = p.row(m, n + 1);
            let k = table.offsets[m] + (n - m) * nlat;
            if n > m {
                let lo = p.row(m, n - 1);
                let c_lo = (n + 1) as f64 * eps(n);
                let c_hi = n as f64 * eps(n + 1);
                for i in 0..nlat {
                    table.values[k + i] = c_lo * lo[i] - c_hi * hi[i];
                }
            } else {
                // eps_{n,m} = 0 at n = m: only the upper neighbor contributes.
                let c_hi = n as f64 * eps(n + 1);
                for i in 0..nlat {
                    table.values[k + i] = -c_hi * hi[i];
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    #[test]
    fn p00_is_inverse_sqrt_4pi() {
        let t = Truncation::triangular(2).unwrap();
        let table = legendre_table(t, &[0.3, -0.9]).unwrap();
        for i in 0..2 {
            assert!((table.value(0, 0, i) - 0.282_094_791_773_878_1).abs() < 1e-15);
        }
    }

    #[test]
    fn low_degree_closed_forms() {
        let t = Truncation::triangular(2).unwrap();
        let xs = [0.0, 0.5, -0.7, 0.99];
        let table = legendre_table(t, &xs).unwrap();
        let c = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        for (i, &x) in xs.iter().enumerate() {
            let s = (1.0 - x * x).sqrt();
            assert!((table.value(0, 1, i) - 3.0f64.sqrt() * c * x).abs() < 1e-14);
            assert!((table.value(1, 1, i) + (3.0f64 / 2.0).sqrt() * c * s).abs() < 1e-14);
            let p20 = 5.0f64.sqrt() * c * 0.5 * (3.0 * x * x - 1.0);
            assert!((table.value(0, 2, i) - p20).abs() < 1e-14);
            let p22 = (15.0f64 / 8.0).sqrt() * c * s * s * 2.0 * 0.5; // sqrt(5/(4pi) * 3/8) * ... simplified below
            let p22_direct = 0.25 * (15.0 / (2.0 * std::f64::consts::PI)).sqrt() * s * s;
            assert!((p22 - p22_direct).abs() < 1e-12);
            assert!((table.value(2, 2, i) - p22_direct).abs() < 1e-14);
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let (x, w) = gauss_legendre(16).unwrap();
        let t = Truncation::triangular(7).unwrap();
        let table = legendre_table(t, &x).unwrap();
        for m in 0..=3usize {
            for n1 in m..=7 {
                for n2 in m..=7 {
                    let dot: f64 = (0..16)
                        .map(|i| w[i] * table.value(m, n1, i) * table.value(m, n2, i))
                        .sum();
                    let expect = if n1 == n2 { 1.0 } else { 0.0 };
                    let got = 2.0 * std::f64::consts::PI * dot;
                    assert!(
                        (got - expect).abs() < 1e-12,
                        "m={m} n1={n1} n2={n2}: {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn high_degree_stays_finite_and_orthonormal() {
        // Near-polar nodes drive the sectoral seed deep below f64 range
        // before rescaling kicks in.
        let (x, w) = gauss_legendre(320).unwrap();
        let t = Truncation::triangular(213).unwrap();
        let table = legendre_table(t, &x).unwrap();
        assert!(table.values.iter().all(|v| v.is_finite()));
        for &(m, n1, n2) in &[(213, 213, 213), (200, 205, 211), (150, 180, 180)] {
            let dot: f64 = (0..320)
                .map(|i| w[i] * table.value(m, n1, i) * table.value(m, n2, i))
                .sum();
            let expect = if n1 == n2 { 1.0 } else { 0.0 };
            let got = 2.0 * std::f64::consts::PI * dot;
            assert!((got - expect).abs() < 1e-10, "m={m} n1={n1} n2={n2}: {got}");
        }
    }

    #[test]
    fn derivative_table_matches_finite_differences() {
        let t = Truncation::triangular(10).unwrap();
        let xs = [0.1, -0.45, 0.8];
        let g = legendre_deriv_table(t, &xs).unwrap();
        let h = 1e-6;
        let lo: Vec<f64> = xs.iter().map(|x| x - h).collect();
        let hi: Vec<f64> = xs.iter().map(|x| x + h).collect();
        let tlo = legendre_table(t, &lo).unwrap();
        let thi = legendre_table(t, &hi).unwrap();
        for m in 0..=10usize {
            for n in m..=10 {
                for i in 0..xs.len() {
                    let fd = (thi.value(m, n, i) - tlo.value(m, n, i)) / (2.0 * h);
                    let want = (1.0 - xs[i] * xs[i]) * fd;
                    let got = g.value(m, n, i);
                    assert!(
                        (got - want).abs() < 1e-7 * (1.0 + want.abs()),
                        "m={m} n={n} i={i}: {got} vs {want}"
                    );
                }
            }
        }
    }

}
