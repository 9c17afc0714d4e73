//! Raw numeric kernels shared by forward and backward passes. All loops are
//! written so the inner trip is contiguous and auto-vectorizes.

/// out += a (p x q) * b (q x r), accumulating.
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], p: usize, q: usize, r: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), p * q);
    debug_assert_eq!(b.len(), q * r);
    debug_assert_eq!(out.len(), p * r);
    for i in 0..p {
        let arow = &a[i * q..(i + 1) * q];
        let orow = &mut out[i * r..(i + 1) * r];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// out += a (p x q) * b^T where b is (r x q).
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], p: usize, q: usize, r: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), p * q);
    debug_assert_eq!(b.len(), r * q);
    debug_assert_eq!(out.len(), p * r);
    for i in 0..p {
        let arow = &a[i * q..(i + 1) * q];
        let orow = &mut out[i * r..(i + 1) * r];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * q..(j + 1) * q];
            let mut acc = 0.0;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *o += acc;
        }
    }
}

/// out += a^T * b where a is (p x q), b is (p x r); out is (q x r).
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], p: usize, q: usize, r: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), p * q);
    debug_assert_eq!(b.len(), p * r);
    debug_assert_eq!(out.len(), q * r);
    for i in 0..p {
        let arow = &a[i * q..(i + 1) * q];
        let brow = &b[i * r..(i + 1) * r];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let orow = &mut out[k * r..(k + 1) * r];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// Numerically safe softmax over each row of length `n`.
pub(crate) fn softmax_rows(x: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(x.len() % n, 0);
    for (row, orow) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        let mut mx = f64::NEG_INFINITY;
        for &v in row {
            mx = mx.max(v);
        }
        let mut sum = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - mx).exp();
            *o = e;
            sum += e;
        }
        let inv = 1.0 / sum;
        for o in orow.iter_mut() {
            *o *= inv;
        }
    }
}

/// Mean over a centered window of `width` (odd) along contiguous lines of
/// length `n`. `periodic` wraps; otherwise indices clamp to the line ends.
pub(crate) fn box_filter_line(x: &[f64], n: usize, width: usize, periodic: bool, out: &mut [f64]) {
    let h = (width / 2) as isize;
    let inv = 1.0 / width as f64;
    let ni = n as isize;
    for (row, orow) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        for i in 0..ni {
            let mut acc = 0.0;
            for o in -h..=h {
                let j = if periodic {
                    (i + o).rem_euclid(ni)
                } else {
                    (i + o).clamp(0, ni - 1)
                };
                acc += row[j as usize];
            }
            orow[i as usize] = acc * inv;
        }
    }
}

/// Transpose of [`box_filter_line`]: scatter each output gradient back over
/// its window. Identical to the forward filter in the periodic case.
pub(crate) fn box_filter_line_transpose(
    g: &[f64],
    n: usize,
    width: usize,
    periodic: bool,
    out: &mut [f64],
) {
    let h = (width / 2) as isize;
    let inv = 1.0 / width as f64;
    let ni = n as isize;
    for (grow, orow) in g.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        for i in 0..ni {
            let gv = grow[i as usize] * inv;
            for o in -h..=h {
                let j = if periodic {
                    (i + o).rem_euclid(ni)
                } else {
                    (i + o).clamp(0, ni - 1)
                };
                orow[j as usize] += gv;
            }
        }
    }
}

pub(crate) fn erf(x: f64) -> f64 {
    libm::erf(x)
}

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn erf_grad(x: f64) -> f64 {
    FRAC_2_SQRT_PI * (-x * x).exp()
}

/// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
