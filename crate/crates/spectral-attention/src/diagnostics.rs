//! Monitoring quantities for learned Laplacians. The construction guarantees
//! a Hermitian PSD adjacency and zero row sums of D − A; anything beyond that
//! (e.g. Hermitianity of L itself once D picks up complex row sums) is
//! reported here rather than assumed.

use crate::error::{AttnError, Result};
use diff_engine::CTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianDiagnostics {
    /// max over rows of |Σ_j L_ij|.
    pub max_row_sum_abs: f64,
    /// max over entries of |L − L^H|.
    pub hermitian_gap: f64,
    /// smallest eigenvalue of the Hermitian part (L + L^H)/2.
    pub min_eig_hermitian_part: f64,
}

/// Diagnostics for a square complex matrix, or the worst case over a batch
/// of them (maxima over the batch; minimum eigenvalue over the batch).
pub fn laplacian_diagnostics(l: &CTensor) -> Result<LaplacianDiagnostics> {
    let shape = l.shape();
    if shape.len() < 2 || shape[shape.len() - 1] != shape[shape.len() - 2] {
        return Err(AttnError::Shape(format!(
            "diagnostics need square matrices, got {shape:?}"
        )));
    }
    let t = shape[shape.len() - 1];
    let batch: usize = shape[..shape.len() - 2].iter().product();
    let re = l.re.values();
    let im = l.im.values();

    let mut out = LaplacianDiagnostics {
        max_row_sum_abs: 0.0,
        hermitian_gap: 0.0,
        min_eig_hermitian_part: f64::INFINITY,
    };
    for b in 0..batch {
        let x = &re[b * t * t..(b + 1) * t * t];
        let y = &im[b * t * t..(b + 1) * t * t];
        for i in 0..t {
            let (mut sr, mut si) = (0.0, 0.0);
            for j in 0..t {
                sr += x[i * t + j];
                si += y[i * t + j];
            }
            out.max_row_sum_abs = out.max_row_sum_abs.max(sr.hypot(si));
            for j in 0..t {
                let dr = x[i * t + j] - x[j * t + i];
                let di = y[i * t + j] + y[j * t + i];
                out.hermitian_gap = out.hermitian_gap.max(dr.hypot(di));
            }
        }
        let eig = min_eig_hermitian(x, y, t);
        out.min_eig_hermitian_part = out.min_eig_hermitian_part.min(eig);
    }
    Ok(out)
}

/// Smallest eigenvalue of the Hermitian part H = (M + M^H)/2 of M = X + iY.
///
/// Works on the real symmetric embedding [[Hx, −Hy], [Hy, Hx]], whose
/// spectrum is that of H with every eigenvalue doubled.
fn min_eig_hermitian(x: &[f64], y: &[f64], t: usize) -> f64 {
    let n = 2 * t;
    let mut s = vec![0.0; n * n];
    for i in 0..t {
        for j in 0..t {
            let hx = 0.5 * (x[i * t + j] + x[j * t + i]);
            let hy = 0.5 * (y[i * t + j] - y[j * t + i]);
            s[i * n + j] = hx;
            s[(i + t) * n + (j + t)] = hx;
            s[i * n + (j + t)] = -hy;
            s[(i + t) * n + j] = hy;
        }
    }
    *jacobi_eigenvalues(&mut s, n)
        .iter()
        .fold(&f64::INFINITY, |m, v| if v < m { v } else { m })
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
/// Modifies `s` in place and returns the diagonal.
pub(crate) fn jacobi_eigenvalues(s: &mut [f64], n: usize) -> Vec<f64> {
    let scale: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += s[p * n + q] * s[p * n + q];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = s[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (s[q * n + q] - s[p * n + p]) / (2.0 * apq);
                let tau = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (tau * tau + 1.0).sqrt();
                let sn = tau * c;
                for k in 0..n {
                    let skp = s[k * n + p];
                    let skq = s[k * n + q];
                    s[k * n + p] = c * skp - sn * skq;
                    s[k * n + q] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[p * n + k];
                    let sqk = s[q * n + k];
                    s[p * n + k] = c * spk - sn * sqk;
                    s[q * n + k] = sn * spk + c * sqk;
                }
            }
        }
    }
    (0..n).map(|i| s[i * n + i]).collect()
}
