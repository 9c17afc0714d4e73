//! Dense f64 tensors. A `Tensor` is a cheap handle: shared immutable storage
//! plus a globally unique id that the tape uses to wire gradients.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{DiffError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorData {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(DiffError::shape(
                "TensorData::new",
                format!("shape {:?} wants {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; numel],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct Tensor {
    id: u64,
    data: Arc<TensorData>,
    requires_grad: bool,
}

impl Tensor {
    /// A leaf that will not receive a gradient.
    pub fn constant(data: TensorData) -> Self {
        Self {
            id: fresh_id(),
            data: Arc::new(data),
            requires_grad: false,
        }
    }

    /// A leaf whose gradient is retained by `Tape::backward`.
    pub fn param(data: TensorData) -> Self {
        Self {
            id: fresh_id(),
            data: Arc::new(data),
            requires_grad: true,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(TensorData::scalar(v))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::constant(TensorData::zeros(shape))
    }

    pub(crate) fn from_op(data: TensorData, requires_grad: bool) -> Self {
        Self {
            id: fresh_id(),
            data: Arc::new(data),
            requires_grad,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.data.shape
    }

    pub fn numel(&self) -> usize {
        self.data.numel()
    }

    pub fn values(&self) -> &[f64] {
        &self.data.data
    }

    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(DiffError::shape(
                "item",
                format!("expected a scalar, got shape {:?}", self.shape()),
            ));
        }
        Ok(self.data.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub(crate) fn storage(&self) -> &Arc<TensorData> {
        &self.data
    }

    /// Same storage, fresh identity, no gradient flow. The autodiff
    /// equivalent of stop-gradient.
    pub fn detached(&self) -> Tensor {
        Self {
            id: fresh_id(),
            data: Arc::clone(&self.data),
            requires_grad: false,
        }
    }

    /// Mutable access for optimizer updates. Clones the storage only if a
    /// live graph still references it.
    pub fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut Arc::make_mut(&mut self.data).data
    }
}

/// Numpy-style broadcast of two shapes, aligned from the trailing axis.
pub(crate) fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for k in 0..rank {
        let da = if k < a.len() { a[a.len() - 1 - k] } else { 1 };
        let db = if k < b.len() { b[b.len() - 1 - k] } else { 1 };
        out[rank - 1 - k] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(DiffError::shape(
                op,
                format!("cannot broadcast {a:?} with {b:?}"),
            ));
        };
    }
    Ok(out)
}

/// Row-major strides with 0 on broadcast axes, padded to the output rank.
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; out.len()];
    let offset = out.len() - shape.len();
    let mut s = 1usize;
    for k in (0..shape.len()).rev() {
        strides[offset + k] = if shape[k] == 1 { 0 } else { s };
        s *= shape[k];
    }
    strides
}

/// Visit every output position in row-major order, handing the callback the
/// corresponding offsets into two (possibly broadcast) operands. The odometer
/// keeps this allocation- and division-free per element.
pub(crate) fn for_each_offset_pair(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize),
) {
    if out_shape.is_empty() {
        f(0, 0);
        return;
    }
    let rank = out_shape.len();
    let last = out_shape[rank - 1];
    let (sal, sbl) = (sa[rank - 1], sb[rank - 1]);
    let outer: usize = out_shape[..rank - 1].iter().product();
    let mut idx = vec![0usize; rank.saturating_sub(1)];
    let mut a_base = 0usize;
    let mut b_base = 0usize;
    for _ in 0..outer {
        let mut ai = a_base;
        let mut bi = b_base;
        for _ in 0..last {
            f(ai, bi);
            ai += sal;
            bi += sbl;
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            a_base += sa[d];
            b_base += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            a_base -= sa[d] * out_shape[d];
            b_base -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

/// Elementwise binary op with broadcasting. Falls back to the odometer only
/// when shapes differ; the two common cases (identical shapes, operand b a
/// trailing suffix of a) take contiguous fast paths.
pub(crate) fn binary_broadcast(
    op: &'static str,
    a: &TensorData,
    b: &TensorData,
    f: impl Fn(f64, f64) -> f64,
) -> Result<TensorData> {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Ok(TensorData {
            shape: a.shape.clone(),
            data,
        });
    }
    let out_shape = broadcast_shapes(op, &a.shape, &b.shape)?;
    if out_shape == a.shape && is_suffix(&b.shape, &a.shape) && b.numel() > 0 {
        let bn = b.numel();
        let mut data = Vec::with_capacity(a.numel());
        for chunk in a.data.chunks_exact(bn) {
            data.extend(chunk.iter().zip(&b.data).map(|(&x, &y)| f(x, y)));
        }
        return Ok(TensorData {
            shape: out_shape,
            data,
        });
    }
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let mut data = Vec::with_capacity(out_shape.iter().product());
    for_each_offset_pair(&out_shape, &sa, &sb, |ai, bi| {
        data.push(f(a.data[ai], b.data[bi]));
    });
    Ok(TensorData {
        shape: out_shape,
        data,
    })
}

fn is_suffix(small: &[usize], big: &[usize]) -> bool {
    small.len() <= big.len() && big[big.len() - small.len()..] == *small
}

/// Sum `grad` (on the broadcast output shape) down to `target` shape. This is
/// the transpose of broadcasting and shows up in every binary backward pass.
pub(crate) fn reduce_to_shape(grad: &TensorData, target: &[usize]) -> TensorData {
    if grad.shape == target {
        return grad.clone();
    }
    let mut out = TensorData::zeros(target);
    let st = broadcast_strides(target, &grad.shape);
    let zero = vec![0usize; grad.shape.len()];
    let mut k = 0usize;
    for_each_offset_pair(&grad.shape, &st, &zero, |ti, _| {
        out.data[ti] += grad.data[k];
        k += 1;
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(
            broadcast_shapes("t", &[4, 1, 3], &[2, 3]).unwrap(),
            vec![4, 2, 3]
        );
        assert_eq!(broadcast_shapes("t", &[5], &[]).unwrap(), vec![5]);
        assert!(broadcast_shapes("t", &[4, 2], &[3, 2]).is_err());
    }

    #[test]
    fn suffix_fast_path_matches_general() {
        let a = TensorData::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let b = TensorData::new(vec![3], vec![10.0, 20.0, 30.0]).unwrap();
        let got = binary_broadcast("t", &a, &b, |x, y| x + y).unwrap();
        assert_eq!(got.data, vec![10.0, 21.0, 32.0, 13.0, 24.0, 35.0]);
    }

    #[test]
    fn middle_axis_broadcast() {
        let a = TensorData::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = TensorData::new(vec![1, 2, 1], vec![10.0, 100.0]).unwrap();
        let got = binary_broadcast("t", &a, &b, |x, y| x * y).unwrap();
        assert_eq!(got.shape, vec![2, 2, 2]);
        assert_eq!(
            got.data,
            vec![10.0, 20.0, 100.0, 200.0, 30.0, 40.0, 300.0, 400.0]
        );
    }

    #[test]
    fn reduce_undoes_broadcast() {
        let g = TensorData::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let r = reduce_to_shape(&g, &[3]);
        assert_eq!(r.data, vec![2.0, 2.0, 2.0]);
        let r2 = reduce_to_shape(&g, &[2, 1]);
        assert_eq!(r2.data, vec![3.0, 3.0]);
        let r3 = reduce_to_shape(&g, &[]);
        assert_eq!(r3.data, vec![6.0]);
    }
}
