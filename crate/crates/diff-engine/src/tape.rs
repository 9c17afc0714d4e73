//! The recording tape. Every differentiable op is a method on [`Tape`]; it
//! computes the forward value eagerly and, when gradients can flow, pushes a
//! record with just enough saved state to run the reverse pass.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{DiffError, Result};
use crate::kernels;
use crate::tensor::{
    binary_broadcast, broadcast_shapes, broadcast_strides, for_each_offset_pair, reduce_to_shape,
    Tensor, TensorData,
};

/// A multi-output differentiable primitive defined outside this crate.
/// Forward gets raw inputs; backward gets inputs, outputs and the output
/// cotangents (absent if nothing flowed into that output) and returns one
/// optional cotangent per input.
pub trait CustomOp: std::fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&TensorData]) -> Result<Vec<TensorData>>;
    fn backward(
        &self,
        inputs: &[&TensorData],
        outputs: &[&TensorData],
        out_grads: &[Option<&TensorData>],
    ) -> Result<Vec<Option<TensorData>>>;
}

#[derive(Debug, Clone, Copy)]
struct Meta {
    id: u64,
    live: bool, // gradient wanted (requires_grad propagated)
}

impl Meta {
    fn of(t: &Tensor) -> Self {
        Self {
            id: t.id(),
            live: t.requires_grad(),
        }
    }
}

#[derive(Debug)]
enum Rule {
    Add {
        a: Meta,
        b: Meta,
        a_shape: Vec<usize>,
        b_shape: Vec<usize>,
    },
    Sub {
        a: Meta,
        b: Meta,
        a_shape: Vec<usize>,
        b_shape: Vec<usize>,
    },
    Mul {
        a: Meta,
        b: Meta,
        a_data: Arc<TensorData>,
        b_data: Arc<TensorData>,
    },
    AffineScalar {
        a: Meta,
        mul: f64,
    },
    Matmul {
        a: Meta,
        b: Meta,
        a_data: Arc<TensorData>,
        b_data: Arc<TensorData>,
    },
    Bmm {
        a: Meta,
        b: Meta,
        a_data: Arc<TensorData>,
        b_data: Arc<TensorData>,
    },
    TransposeLast {
        a: Meta,
    },
    Reshape {
        a: Meta,
        a_shape: Vec<usize>,
    },
    BroadcastTo {
        a: Meta,
        a_shape: Vec<usize>,
    },
    Concat {
        inputs: Vec<(Meta, usize)>, // (input, extent along axis)
        axis: usize,
    },
    Slice {
        a: Meta,
        a_shape: Vec<usize>,
        axis: usize,
        start: usize,
    },
    Tril {
        a: Meta,
    },
    SumAll {
        a: Meta,
        a_shape: Vec<usize>,
    },
    MeanAll {
        a: Meta,
        a_shape: Vec<usize>,
    },
    SumAxis {
        a: Meta,
        a_shape: Vec<usize>,
        axis: usize,
    },
    MeanAxis {
        a: Meta,
        a_shape: Vec<usize>,
        axis: usize,
    },
    Unary {
        a: Meta,
        kind: UnaryKind,
        saved: Arc<TensorData>, // input or output, whichever the grad needs
    },
    PowfConst {
        a: Meta,
        a_data: Arc<TensorData>,
        p: f64,
    },
    Softmax {
        a: Meta,
        y: Arc<TensorData>,
    },
    Roll {
        a: Meta,
        axis: usize,
        shift: i64,
    },
    ShiftClamped {
        a: Meta,
        axis: usize,
        shift: i64,
    },
    BoxFilter {
        a: Meta,
        axis: usize,
        width: usize,
        periodic: bool,
    },
    DiagEmbed {
        a: Meta,
    },
    Custom {
        op: Arc<dyn CustomOp>,
        inputs: Vec<Meta>,
        saved_in: Vec<Arc<TensorData>>,
        saved_out: Vec<Arc<TensorData>>,
    },
}

#[derive(Debug, Clone, Copy)]
enum UnaryKind {
    Exp,     // saved = y
    Sqrt,    // saved = y
    Sigmoid, // saved = y
    Erf,     // saved = x
    Gelu,    // saved = x
}

#[derive(Debug)]
struct Record {
    out_ids: Vec<u64>,
    rule: Rule,
}

/// Gradients keyed by tensor id, as returned by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    map: HashMap<u64, TensorData>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&TensorData> {
        self.map.get(&t.id())
    }

    pub fn get_by_id(&self, id: u64) -> Option<&TensorData> {
        self.map.get(&id)
    }

    pub fn take(&mut self, t: &Tensor) -> Option<TensorData> {
        self.map.remove(&t.id())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    records: Vec<Record>,
    enabled: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            enabled: true,
        }
    }

    /// A tape that records nothing; forward values are still computed.
    pub fn disabled() -> Self {
        Self {
            records: Vec::new(),
            enabled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    fn track(&self, inputs: &[&Tensor]) -> bool {
        self.enabled && inputs.iter().any(|t| t.requires_grad())
    }

    fn push(&mut self, out_ids: Vec<u64>, rule: Rule) {
        self.records.push(Record { out_ids, rule });
    }

    // ---- elementwise binary ----

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let out = binary_broadcast("add", a.storage(), b.storage(), |x, y| x + y)?;
        let track = self.track(&[a, b]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Add {
                    a: Meta::of(a),
                    b: Meta::of(b),
                    a_shape: a.shape().to_vec(),
                    b_shape: b.shape().to_vec(),
                },
            );
        }
        Ok(t)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let out = binary_broadcast("sub", a.storage(), b.storage(), |x, y| x - y)?;
        let track = self.track(&[a, b]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Sub {
                    a: Meta::of(a),
                    b: Meta::of(b),
                    a_shape: a.shape().to_vec(),
                    b_shape: b.shape().to_vec(),
                },
            );
        }
        Ok(t)
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let out = binary_broadcast("mul", a.storage(), b.storage(), |x, y| x * y)?;
        let track = self.track(&[a, b]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Mul {
                    a: Meta::of(a),
                    b: Meta::of(b),
                    a_data: Arc::clone(a.storage()),
                    b_data: Arc::clone(b.storage()),
                },
            );
        }
        Ok(t)
    }

    pub fn neg(&mut self, a: &Tensor) -> Result<Tensor> {
        self.affine(a, -1.0, 0.0)
    }

    /// y = mul * a + add, with scalar constants.
    pub fn affine(&mut self, a: &Tensor, mul: f64, add: f64) -> Result<Tensor> {
        let data = a.values().iter().map(|&v| mul * v + add).collect();
        let out = TensorData {
            shape: a.shape().to_vec(),
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(vec![t.id()], Rule::AffineScalar { a: Meta::of(a), mul });
        }
        Ok(t)
    }

    // ---- linear algebra ----

    /// a (..., p, q) x b (q, r): any leading batch dims on the left operand,
    /// a shared 2-D right operand.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (ashape, bshape) = (a.shape(), b.shape());
        if ashape.len() < 2 || bshape.len() != 2 || ashape[ashape.len() - 1] != bshape[0] {
            return Err(DiffError::shape(
                "matmul",
                format!("{ashape:?} x {bshape:?}"),
            ));
        }
        let q = bshape[0];
        let r = bshape[1];
        let p = ashape[ashape.len() - 2];
        let batch: usize = ashape[..ashape.len() - 2].iter().product();
        let mut out_shape = ashape.to_vec();
        *out_shape.last_mut().unwrap() = r;
        let mut data = vec![0.0; batch * p * r];
        for l in 0..batch {
            kernels::matmul_nn(
                &a.values()[l * p * q..(l + 1) * p * q],
                b.values(),
                p,
                q,
                r,
                &mut data[l * p * r..(l + 1) * p * r],
            );
        }
        let out = TensorData {
            shape: out_shape,
            data,
        };
        let track = self.track(&[a, b]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Matmul {
                    a: Meta::of(a),
                    b: Meta::of(b),
                    a_data: Arc::clone(a.storage()),
                    b_data: Arc::clone(b.storage()),
                },
            );
        }
        Ok(t)
    }

    /// Batched matmul: (B, p, q) x (B, q, r).
    pub fn bmm(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (ashape, bshape) = (a.shape(), b.shape());
        if ashape.len() != 3
            || bshape.len() != 3
            || ashape[0] != bshape[0]
            || ashape[2] != bshape[1]
        {
            return Err(DiffError::shape("bmm", format!("{ashape:?} x {bshape:?}")));
        }
        let (bs, p, q, r) = (ashape[0], ashape[1], ashape[2], bshape[2]);
        let mut data = vec![0.0; bs * p * r];
        for l in 0..bs {
            kernels::matmul_nn(
                &a.values()[l * p * q..(l + 1) * p * q],
                &b.values()[l * q * r..(l + 1) * q * r],
                p,
                q,
                r,
                &mut data[l * p * r..(l + 1) * p * r],
            );
        }
        let out = TensorData {
            shape: vec![bs, p, r],
            data,
        };
        let track = self.track(&[a, b]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Bmm {
                    a: Meta::of(a),
                    b: Meta::of(b),
                    a_data: Arc::clone(a.storage()),
                    b_data: Arc::clone(b.storage()),
                },
            );
        }
        Ok(t)
    }

    /// Swap the last two axes.
    pub fn transpose_last(&mut self, a: &Tensor) -> Result<Tensor> {
        let out = transpose_last_raw(a.storage())?;
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(vec![t.id()], Rule::TransposeLast { a: Meta::of(a) });
        }
        Ok(t)
    }

    pub fn reshape(&mut self, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != a.numel() {
            return Err(DiffError::shape(
                "reshape",
                format!("{:?} -> {shape:?}", a.shape()),
            ));
        }
        let out = TensorData {
            shape: shape.to_vec(),
            data: a.values().to_vec(),
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Reshape {
                    a: Meta::of(a),
                    a_shape: a.shape().to_vec(),
                },
            );
        }
        Ok(t)
    }

    pub fn broadcast_to(&mut self, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
        let out_shape = broadcast_shapes("broadcast_to", a.shape(), shape)?;
        if out_shape != shape {
            return Err(DiffError::shape(
                "broadcast_to",
                format!("{:?} does not broadcast to {shape:?}", a.shape()),
            ));
        }
        let sa = broadcast_strides(a.shape(), shape);
        let zero = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(shape.iter().product());
        for_each_offset_pair(shape, &sa, &zero, |ai, _| data.push(a.values()[ai]));
        let out = TensorData {
            shape: shape.to_vec(),
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::BroadcastTo {
                    a: Meta::of(a),
                    a_shape: a.shape().to_vec(),
                },
            );
        }
        Ok(t)
    }

    pub fn concat(&mut self, parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(DiffError::arg("concat", "no inputs"));
        }
        let rank = parts[0].shape().len();
        if axis >= rank {
            return Err(DiffError::arg(
                "concat",
                format!("axis {axis} out of range for rank {rank}"),
            ));
        }
        let mut total = 0usize;
        for p in parts {
            if p.shape().len() != rank {
                return Err(DiffError::shape("concat", "rank mismatch"));
            }
            for (d, (&x, &y)) in p.shape().iter().zip(parts[0].shape()).enumerate() {
                if d != axis && x != y {
                    return Err(DiffError::shape(
                        "concat",
                        format!("{:?} vs {:?} off axis {axis}", p.shape(), parts[0].shape()),
                    ));
                }
            }
            total += p.shape()[axis];
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = total;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * total * inner];
        let mut offset = 0usize;
        for p in parts {
            let ext = p.shape()[axis];
            for o in 0..outer {
                let src = &p.values()[o * ext * inner..(o + 1) * ext * inner];
                let dst_start = (o * total + offset) * inner;
                data[dst_start..dst_start + ext * inner].copy_from_slice(src);
            }
            offset += ext;
        }
        let out = TensorData {
            shape: out_shape,
            data,
        };
        let track = self.enabled && parts.iter().any(|t| t.requires_grad());
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Concat {
                    inputs: parts
                        .iter()
                        .map(|p| (Meta::of(p), p.shape()[axis]))
                        .collect(),
                    axis,
                },
            );
        }
        Ok(t)
    }

    pub fn slice(&mut self, a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let shape = a.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(DiffError::arg(
                "slice",
                format!("axis {axis} range {start}..{} on {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let ext = shape[axis];
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = (o * ext + start) * inner;
            data[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&a.values()[src..src + len * inner]);
        }
        let out = TensorData {
            shape: out_shape,
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Slice {
                    a: Meta::of(a),
                    a_shape: shape.to_vec(),
                    axis,
                    start,
                },
            );
        }
        Ok(t)
    }

    /// Zero out entries above the main diagonal of the last two axes
    /// (diagonal kept).
    pub fn tril(&mut self, a: &Tensor) -> Result<Tensor> {
        let shape = a.shape();
        if shape.len() < 2 {
            return Err(DiffError::shape("tril", format!("{shape:?}")));
        }
        let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let mut data = a.values().to_vec();
        for block in data.chunks_exact_mut(rows * cols) {
            for i in 0..rows {
                for v in &mut block[i * cols + (i + 1).min(cols)..(i + 1) * cols] {
                    *v = 0.0;
                }
            }
        }
        let out = TensorData {
            shape: shape.to_vec(),
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(vec![t.id()], Rule::Tril { a: Meta::of(a) });
        }
        Ok(t)
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: &Tensor) -> Result<Tensor> {
        let s: f64 = a.values().iter().sum();
        let track = self.track(&[a]);
        let t = Tensor::from_op(TensorData::scalar(s), track);
        if track {
            self.push(
                vec![t.id()],
                Rule::SumAll {
                    a: Meta::of(a),
                    a_shape: a.shape().to_vec(),
                },
            );
        }
        Ok(t)
    }

    pub fn mean_all(&mut self, a: &Tensor) -> Result<Tensor> {
        let n = a.numel().max(1) as f64;
        let s: f64 = a.values().iter().sum::<f64>() / n;
        let track = self.track(&[a]);
        let t = Tensor::from_op(TensorData::scalar(s), track);
        if track {
            self.push(
                vec![t.id()],
                Rule::MeanAll {
                    a: Meta::of(a),
                    a_shape: a.shape().to_vec(),
                },
            );
        }
        Ok(t)
    }

    /// Sum over one axis, keeping it as an axis of extent 1 so results
    /// broadcast back naturally.
    pub fn sum_axis(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        let (out, _) = reduce_axis_raw(a.storage(), axis, false)?;
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::SumAxis {
                    a: Meta::of(a),
                    a_shape: a.shape().to_vec(),
                    axis,
                },
            );
        }
        Ok(t)
    }

    pub fn mean_axis(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        let (out, _) = reduce_axis_raw(a.storage(), axis, true)?;
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::MeanAxis {
                    a: Meta::of(a),
                    a_shape: a.shape().to_vec(),
                    axis,
                },
            );
        }
        Ok(t)
    }

    // ---- elementwise unary ----

    fn unary(
        &mut self,
        a: &Tensor,
        kind: UnaryKind,
        f: impl Fn(f64) -> f64,
        save_output: bool,
    ) -> Result<Tensor> {
        let data: Vec<f64> = a.values().iter().map(|&v| f(v)).collect();
        let out = TensorData {
            shape: a.shape().to_vec(),
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            let saved = if save_output {
                Arc::clone(t.storage())
            } else {
                Arc::clone(a.storage())
            };
            self.push(
                vec![t.id()],
                Rule::Unary {
                    a: Meta::of(a),
                    kind,
                    saved,
                },
            );
        }
        Ok(t)
    }

    pub fn exp(&mut self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Exp, f64::exp, true)
    }

    pub fn sqrt(&mut self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Sqrt, f64::sqrt, true)
    }

    pub fn sigmoid(&mut self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Sigmoid, kernels::sigmoid, true)
    }

    pub fn erf(&mut self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Erf, kernels::erf, false)
    }

    pub fn gelu(&mut self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Gelu, kernels::gelu, false)
    }

    pub fn powf(&mut self, a: &Tensor, p: f64) -> Result<Tensor> {
        let data: Vec<f64> = a.values().iter().map(|&v| v.powf(p)).collect();
        let out = TensorData {
            shape: a.shape().to_vec(),
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::PowfConst {
                    a: Meta::of(a),
                    a_data: Arc::clone(a.storage()),
                    p,
                },
            );
        }
        Ok(t)
    }

    /// Softmax over the last axis, with the usual max shift so constant row
    /// offsets cancel exactly.
    pub fn softmax(&mut self, a: &Tensor) -> Result<Tensor> {
        let shape = a.shape();
        if shape.is_empty() {
            return Err(DiffError::shape("softmax", "rank 0"));
        }
        let n = shape[shape.len() - 1];
        let mut data = vec![0.0; a.numel()];
        kernels::softmax_rows(a.values(), n, &mut data);
        let out = TensorData {
            shape: shape.to_vec(),
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            let y = Arc::clone(t.storage());
            self.push(vec![t.id()], Rule::Softmax { a: Meta::of(a), y });
        }
        Ok(t)
    }

    // ---- structured data movement ----

    /// Periodic shift: out[i] = in[i - shift] along the axis.
    pub fn roll(&mut self, a: &Tensor, axis: usize, shift: i64) -> Result<Tensor> {
        let out = shift_raw(a.storage(), axis, shift, true)?;
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::Roll {
                    a: Meta::of(a),
                    axis,
                    shift,
                },
            );
        }
        Ok(t)
    }

    /// Shift with edge replication instead of wrap-around.
    pub fn shift_clamped(&mut self, a: &Tensor, axis: usize, shift: i64) -> Result<Tensor> {
        let out = shift_raw(a.storage(), axis, shift, false)?;
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::ShiftClamped {
                    a: Meta::of(a),
                    axis,
                    shift,
                },
            );
        }
        Ok(t)
    }

    /// Mean over a centered window of odd `width` along `axis`; periodic or
    /// edge-clamped boundaries. Fused so wide filters cost one record.
    pub fn box_filter1d(
        &mut self,
        a: &Tensor,
        axis: usize,
        width: usize,
        periodic: bool,
    ) -> Result<Tensor> {
        if width % 2 == 0 || width == 0 {
            return Err(DiffError::arg(
                "box_filter1d",
                format!("width must be odd and positive, got {width}"),
            ));
        }
        if axis >= a.shape().len() {
            return Err(DiffError::arg("box_filter1d", format!("axis {axis}")));
        }
        let moved = move_axis_last(a.storage(), axis);
        let n = *moved.shape.last().unwrap();
        let mut filtered = vec![0.0; moved.numel()];
        kernels::box_filter_line(&moved.data, n, width, periodic, &mut filtered);
        let out = move_last_back(
            &TensorData {
                shape: moved.shape.clone(),
                data: filtered,
            },
            axis,
            a.shape(),
        );
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(
                vec![t.id()],
                Rule::BoxFilter {
                    a: Meta::of(a),
                    axis,
                    width,
                    periodic,
                },
            );
        }
        Ok(t)
    }

    /// (..., n) -> (..., n, n) with the input on the diagonal.
    pub fn diag_embed(&mut self, a: &Tensor) -> Result<Tensor> {
        let shape = a.shape();
        if shape.is_empty() {
            return Err(DiffError::shape("diag_embed", "rank 0"));
        }
        let n = shape[shape.len() - 1];
        let mut out_shape = shape.to_vec();
        out_shape.push(n);
        let mut data = vec![0.0; a.numel() * n];
        for (r, row) in a.values().chunks_exact(n).enumerate() {
            for (i, &v) in row.iter().enumerate() {
                data[(r * n + i) * n + i] = v;
            }
        }
        let out = TensorData {
            shape: out_shape,
            data,
        };
        let track = self.track(&[a]);
        let t = Tensor::from_op(out, track);
        if track {
            self.push(vec![t.id()], Rule::DiagEmbed { a: Meta::of(a) });
        }
        Ok(t)
    }

    /// Run a [`CustomOp`], recording it as a single multi-output node.
    pub fn apply(&mut self, op: Arc<dyn CustomOp>, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let raw: Vec<&TensorData> = inputs.iter().map(|t| t.storage().as_ref()).collect();
        let outs = op.forward(&raw)?;
        let track = self.enabled && inputs.iter().any(|t| t.requires_grad());
        let tensors: Vec<Tensor> = outs.into_iter().map(|d| Tensor::from_op(d, track)).collect();
        if track {
            self.push(
                tensors.iter().map(|t| t.id()).collect(),
                Rule::Custom {
                    op,
                    inputs: inputs.iter().map(|t| Meta::of(t)).collect(),
                    saved_in: inputs.iter().map(|t| Arc::clone(t.storage())).collect(),
                    saved_out: tensors.iter().map(|t| Arc::clone(t.storage())).collect(),
                },
            );
        }
        Ok(tensors)
    }

    // ---- reverse pass ----

    /// Walk the records backward from a scalar loss. Gradients of leaves
    /// (tensors never produced by a record) are kept; intermediate gradients
    /// are dropped as soon as their producing record has consumed them.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.numel() != 1 {
            return Err(DiffError::NonScalarLoss(loss.shape().to_vec()));
        }
        let mut grads: HashMap<u64, TensorData> = HashMap::new();
        grads.insert(
            loss.id(),
            TensorData {
                shape: loss.shape().to_vec(),
                data: vec![1.0],
            },
        );
        for rec in self.records.iter().rev() {
            if !rec.out_ids.iter().any(|id| grads.contains_key(id)) {
                continue;
            }
            apply_rule(rec, &mut grads)?;
            for id in &rec.out_ids {
                grads.remove(id);
            }
        }
        Ok(Gradients { map: grads })
    }
}

fn accumulate(grads: &mut HashMap<u64, TensorData>, meta: Meta, contrib: TensorData) {
    if !meta.live {
        return;
    }
    match grads.entry(meta.id) {
        std::collections::hash_map::Entry::Occupied(mut e) => {
            let g = e.get_mut();
            debug_assert_eq!(g.shape, contrib.shape);
            for (a, b) in g.data.iter_mut().zip(&contrib.data) {
                *a += b;
            }
        }
        std::collections::hash_map::Entry::Vacant(e) => {
            e.insert(contrib);
        }
    }
}

fn apply_rule(rec: &Record, grads: &mut HashMap<u64, TensorData>) -> Result<()> {
    match &rec.rule {
        Rule::Add {
            a,
            b,
            a_shape,
            b_shape,
        } => {
            let go = grads.get(&rec.out_ids[0]).unwrap().clone();
            accumulate(grads, *a, reduce_to_shape(&go, a_shape));
            accumulate(grads, *b, reduce_to_shape(&go, b_shape));
        }
        Rule::Sub {
            a,
            b,
            a_shape,
            b_shape,
        } => {
            let go = grads.get(&rec.out_ids[0]).unwrap().clone();
            accumulate(grads, *a, reduce_to_shape(&go, a_shape));
            let mut neg = go;
            for v in &mut neg.data {
                *v = -*v;
            }
            accumulate(grads, *b, reduce_to_shape(&neg, b_shape));
        }
        Rule::Mul {
            a,
            b,
            a_data,
            b_data,
        } => {
            let (ga, gb) = {
                let go = grads.get(&rec.out_ids[0]).unwrap();
                let ga = if a.live {
                    let full = binary_broadcast("mul_bwd", go, b_data, |g, y| g * y)?;
                    Some(reduce_to_shape(&full, &a_data.shape))
                } else {
                    None
                };
                let gb = if b.live {
                    let full = binary_broadcast("mul_bwd", go, a_data, |g, x| g * x)?;
                    Some(reduce_to_shape(&full, &b_data.shape))
                } else {
                    None
                };
                (ga, gb)
            };
            if let Some(ga) = ga {
                accumulate(grads, *a, ga);
            }
            if let Some(gb) = gb {
                accumulate(grads, *b, gb);
            }
        }
        Rule::AffineScalar { a, mul } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let contrib = TensorData {
                shape: go.shape.clone(),
                data: go.data.iter().map(|&v| v * mul).collect(),
            };
            accumulate(grads, *a, contrib);
        }
        Rule::Matmul {
            a,
            b,
            a_data,
            b_data,
        } => {
            let q = b_data.shape[0];
            let r = b_data.shape[1];
            let p = a_data.shape[a_data.shape.len() - 2];
            let batch: usize = a_data.shape[..a_data.shape.len() - 2].iter().product();
            let (ga, gb) = {
                let go = grads.get(&rec.out_ids[0]).unwrap();
                let ga = a.live.then(|| {
                    let mut ga = TensorData::zeros(&a_data.shape);
                    for l in 0..batch {
                        kernels::matmul_nt(
                            &go.data[l * p * r..(l + 1) * p * r],
                            &b_data.data,
                            p,
                            r,
                            q,
                            &mut ga.data[l * p * q..(l + 1) * p * q],
                        );
                    }
                    ga
                });
                let gb = b.live.then(|| {
                    let mut gb = TensorData::zeros(&b_data.shape);
                    for l in 0..batch {
                        kernels::matmul_tn(
                            &a_data.data[l * p * q..(l + 1) * p * q],
                            &go.data[l * p * r..(l + 1) * p * r],
                            p,
                            q,
                            r,
                            &mut gb.data,
                        );
                    }
                    gb
                });
                (ga, gb)
            };
            if let Some(ga) = ga {
                accumulate(grads, *a, ga);
            }
            if let Some(gb) = gb {
                accumulate(grads, *b, gb);
            }
        }
        Rule::Bmm {
            a,
            b,
            a_data,
            b_data,
        } => {
            let (bs, p, q) = (a_data.shape[0], a_data.shape[1], a_data.shape[2]);
            let r = b_data.shape[2];
            let (ga, gb) = {
                let go = grads.get(&rec.out_ids[0]).unwrap();
                let ga = a.live.then(|| {
                    let mut ga = TensorData::zeros(&a_data.shape);
                    for l in 0..bs {
                        kernels::matmul_nt(
                            &go.data[l * p * r..(l + 1) * p * r],
                            &b_data.data[l * q * r..(l + 1) * q * r],
                            p,
                            r,
                            q,
                            &mut ga.data[l * p * q..(l + 1) * p * q],
                        );
                    }
                    ga
                });
                let gb = b.live.then(|| {
                    let mut gb = TensorData::zeros(&b_data.shape);
                    for l in 0..bs {
                        kernels::matmul_tn(
                            &a_data.data[l * p * q..(l + 1) * p * q],
                            &go.data[l * p * r..(l + 1) * p * r],
                            p,
                            q,
                            r,
                            &mut gb.data[l * q * r..(l + 1) * q * r],
                        );
                    }
                    gb
                });
                (ga, gb)
            };
            if let Some(ga) = ga {
                accumulate(grads, *a, ga);
            }
            if let Some(gb) = gb {
                accumulate(grads, *b, gb);
            }
        }
        Rule::TransposeLast { a } => {
            let ga = transpose_last_raw(grads.get(&rec.out_ids[0]).unwrap())?;
            accumulate(grads, *a, ga);
        }
        Rule::Reshape { a, a_shape } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            accumulate(
                grads,
                *a,
                TensorData {
                    shape: a_shape.clone(),
                    data: go.data.clone(),
                },
            );
        }
        Rule::BroadcastTo { a, a_shape } => {
            let go = grads.get(&rec.out_ids[0]).unwrap().clone();
            accumulate(grads, *a, reduce_to_shape(&go, a_shape));
        }
        Rule::Concat { inputs, axis } => {
            let go = grads.get(&rec.out_ids[0]).unwrap().clone();
            let out_shape = &go.shape;
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[*axis + 1..].iter().product();
            let total = out_shape[*axis];
            let mut offset = 0usize;
            for (meta, ext) in inputs {
                if meta.live {
                    let mut shape = out_shape.clone();
                    shape[*axis] = *ext;
                    let mut part = TensorData::zeros(&shape);
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        part.data[o * ext * inner..(o + 1) * ext * inner]
                            .copy_from_slice(&go.data[src..src + ext * inner]);
                    }
                    accumulate(grads, *meta, part);
                }
                offset += ext;
            }
        }
        Rule::Slice {
            a,
            a_shape,
            axis,
            start,
        } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let outer: usize = a_shape[..*axis].iter().product();
            let inner: usize = a_shape[*axis + 1..].iter().product();
            let ext = a_shape[*axis];
            let len = go.shape[*axis];
            let mut ga = TensorData::zeros(a_shape);
            for o in 0..outer {
                let dst = (o * ext + start) * inner;
                ga.data[dst..dst + len * inner]
                    .copy_from_slice(&go.data[o * len * inner..(o + 1) * len * inner]);
            }
            accumulate(grads, *a, ga);
        }
        Rule::Tril { a } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let shape = &go.shape;
            let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
            let mut ga = go.clone();
            for block in ga.data.chunks_exact_mut(rows * cols) {
                for i in 0..rows {
                    for v in &mut block[i * cols + (i + 1).min(cols)..(i + 1) * cols] {
                        *v = 0.0;
                    }
                }
            }
            accumulate(grads, *a, ga);
        }
        Rule::SumAll { a, a_shape } => {
            let go = grads.get(&rec.out_ids[0]).unwrap().data[0];
            accumulate(grads, *a, TensorData::full(a_shape, go));
        }
        Rule::MeanAll { a, a_shape } => {
            let n: usize = a_shape.iter().product();
            let go = grads.get(&rec.out_ids[0]).unwrap().data[0] / n.max(1) as f64;
            accumulate(grads, *a, TensorData::full(a_shape, go));
        }
        Rule::SumAxis { a, a_shape, axis } | Rule::MeanAxis { a, a_shape, axis } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let scale = if matches!(rec.rule, Rule::MeanAxis { .. }) {
                1.0 / a_shape[*axis] as f64
            } else {
                1.0
            };
            let outer: usize = a_shape[..*axis].iter().product();
            let inner: usize = a_shape[*axis + 1..].iter().product();
            let ext = a_shape[*axis];
            let mut ga = TensorData::zeros(a_shape);
            for o in 0..outer {
                let grow = &go.data[o * inner..(o + 1) * inner];
                for k in 0..ext {
                    let dst = &mut ga.data[(o * ext + k) * inner..(o * ext + k + 1) * inner];
                    for (d, &gv) in dst.iter_mut().zip(grow) {
                        *d = gv * scale;
                    }
                }
            }
            accumulate(grads, *a, ga);
        }
        Rule::Unary { a, kind, saved } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let data: Vec<f64> = match kind {
                UnaryKind::Exp => go
                    .data
                    .iter()
                    .zip(&saved.data)
                    .map(|(&g, &y)| g * y)
                    .collect(),
                UnaryKind::Sqrt => go
                    .data
                    .iter()
                    .zip(&saved.data)
                    .map(|(&g, &y)| g * 0.5 / y)
                    .collect(),
                UnaryKind::Sigmoid => go
                    .data
                    .iter()
                    .zip(&saved.data)
                    .map(|(&g, &y)| g * y * (1.0 - y))
                    .collect(),
                UnaryKind::Erf => go
                    .data
                    .iter()
                    .zip(&saved.data)
                    .map(|(&g, &x)| g * kernels::erf_grad(x))
                    .collect(),
                UnaryKind::Gelu => go
                    .data
                    .iter()
                    .zip(&saved.data)
                    .map(|(&g, &x)| g * kernels::gelu_grad(x))
                    .collect(),
            };
            accumulate(
                grads,
                *a,
                TensorData {
                    shape: saved.shape.clone(),
                    data,
                },
            );
        }
        Rule::PowfConst { a, a_data, p } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let data: Vec<f64> = go
                .data
                .iter()
                .zip(&a_data.data)
                .map(|(&g, &x)| g * p * x.powf(p - 1.0))
                .collect();
            accumulate(
                grads,
                *a,
                TensorData {
                    shape: a_data.shape.clone(),
                    data,
                },
            );
        }
        Rule::Softmax { a, y } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let n = *y.shape.last().unwrap();
            let mut data = vec![0.0; y.numel()];
            for ((grow, yrow), orow) in go
                .data
                .chunks_exact(n)
                .zip(y.data.chunks_exact(n))
                .zip(data.chunks_exact_mut(n))
            {
                let dot: f64 = grow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
                for ((o, &g), &yv) in orow.iter_mut().zip(grow).zip(yrow) {
                    *o = (g - dot) * yv;
                }
            }
            accumulate(
                grads,
                *a,
                TensorData {
                    shape: y.shape.clone(),
                    data,
                },
            );
        }
        Rule::Roll { a, axis, shift } => {
            let ga = shift_raw(grads.get(&rec.out_ids[0]).unwrap(), *axis, -shift, true)?;
            accumulate(grads, *a, ga);
        }
        Rule::ShiftClamped { a, axis, shift } => {
            let ga = shift_clamped_transpose(grads.get(&rec.out_ids[0]).unwrap(), *axis, *shift);
            accumulate(grads, *a, ga);
        }
        Rule::BoxFilter {
            a,
            axis,
            width,
            periodic,
        } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let moved = move_axis_last(go, *axis);
            let n = *moved.shape.last().unwrap();
            let mut scattered = vec![0.0; moved.numel()];
            kernels::box_filter_line_transpose(&moved.data, n, *width, *periodic, &mut scattered);
            let ga = move_last_back(
                &TensorData {
                    shape: moved.shape.clone(),
                    data: scattered,
                },
                *axis,
                &go.shape,
            );
            accumulate(grads, *a, ga);
        }
        Rule::DiagEmbed { a } => {
            let go = grads.get(&rec.out_ids[0]).unwrap();
            let n = *go.shape.last().unwrap();
            let mut shape = go.shape.clone();
            shape.pop();
            let rows: usize = shape.iter().product::<usize>() / n;
            let mut data = vec![0.0; rows * n];
            for r in 0..rows {
                for i in 0..n {
                    data[r * n + i] = go.data[(r * n + i) * n + i];
                }
            }
            accumulate(grads, *a, TensorData { shape, data });
        }
        Rule::Custom {
            op,
            inputs,
            saved_in,
            saved_out,
        } => {
            let out_grads: Vec<Option<TensorData>> = rec
                .out_ids
                .iter()
                .map(|id| grads.get(id).cloned())
                .collect();
            let out_grad_refs: Vec<Option<&TensorData>> =
                out_grads.iter().map(|o| o.as_ref()).collect();
            let in_refs: Vec<&TensorData> = saved_in.iter().map(|a| a.as_ref()).collect();
            let out_refs: Vec<&TensorData> = saved_out.iter().map(|a| a.as_ref()).collect();
            let contribs = op.backward(&in_refs, &out_refs, &out_grad_refs)?;
            if contribs.len() != inputs.len() {
                return Err(DiffError::arg(
                    "custom backward",
                    format!(
                        "{} returned {} gradients for {} inputs",
                        op.name(),
                        contribs.len(),
                        inputs.len()
                    ),
                ));
            }
            for (meta, contrib) in inputs.iter().zip(contribs) {
                if let Some(c) = contrib {
                    accumulate(grads, *meta, c);
                }
            }
        }
    }
    Ok(())
}

fn transpose_last_raw(a: &TensorData) -> Result<TensorData> {
    let shape = &a.shape;
    if shape.len() < 2 {
        return Err(DiffError::shape("transpose_last", format!("{shape:?}")));
    }
    let (p, q) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let mut out_shape = shape.clone();
    out_shape.swap(shape.len() - 2, shape.len() - 1);
    let mut data = vec![0.0; a.numel()];
    for (block, src) in data
        .chunks_exact_mut(p * q)
        .zip(a.data.chunks_exact(p * q))
    {
        for i in 0..p {
            for j in 0..q {
                block[j * p + i] = src[i * q + j];
            }
        }
    }
    Ok(TensorData {
        shape: out_shape,
        data,
    })
}

/// (out, axis extent): reduce one axis to extent 1.
fn reduce_axis_raw(a: &TensorData, axis: usize, mean: bool) -> Result<(TensorData, usize)> {
    let shape = &a.shape;
    if axis >= shape.len() {
        return Err(DiffError::arg(
            "reduce_axis",
            format!("axis {axis} on {shape:?}"),
        ));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let ext = shape[axis];
    let mut out_shape = shape.clone();
    out_shape[axis] = 1;
    let mut data = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..ext {
            let src = &a.data[(o * ext + k) * inner..(o * ext + k + 1) * inner];
            let dst = &mut data[o * inner..(o + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    if mean {
        let inv = 1.0 / ext as f64;
        for v in &mut data {
            *v *= inv;
        }
    }
    Ok((
        TensorData {
            shape: out_shape,
            data,
        },
        ext,
    ))
}

fn shift_raw(a: &TensorData, axis: usize, shift: i64, periodic: bool) -> Result<TensorData> {
    let shape = &a.shape;
    if axis >= shape.len() {
        return Err(DiffError::arg("shift", format!("axis {axis} on {shape:?}")));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let ext = shape[axis] as i64;
    let mut data = vec![0.0; a.numel()];
    for o in 0..outer {
        for i in 0..ext {
            let src_i = if periodic {
                (i - shift).rem_euclid(ext)
            } else {
                (i - shift).clamp(0, ext - 1)
            };
            let dst = (o as i64 * ext + i) as usize * inner;
            let src = (o as i64 * ext + src_i) as usize * inner;
            data[dst..dst + inner].copy_from_slice(&a.data[src..src + inner]);
        }
    }
    Ok(TensorData {
        shape: shape.clone(),
        data,
    })
}

/// Transpose of the clamped shift: scatter-add each output row back to the
/// (clamped) source row it was read from.
fn shift_clamped_transpose(go: &TensorData, axis: usize, shift: i64) -> TensorData {
    let shape = &go.shape;
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let ext = shape[axis] as i64;
    let mut out = TensorData::zeros(shape);
    for o in 0..outer {
        for i in 0..ext {
            let src_i = (i - shift).clamp(0, ext - 1);
            let dst = (o as i64 * ext + src_i) as usize * inner;
            let src = (o as i64 * ext + i) as usize * inner;
            for k in 0..inner {
                out.data[dst + k] += go.data[src + k];
            }
        }
    }
    out
}

/// Copy with `axis` moved to the end (other axes keep order).
fn move_axis_last(a: &TensorData, axis: usize) -> TensorData {
    let shape = &a.shape;
    let rank = shape.len();
    if axis == rank - 1 {
        return a.clone();
    }
    let outer: usize = shape[..axis].iter().product();
    let ext = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape: Vec<usize> = shape[..axis].to_vec();
    out_shape.extend_from_slice(&shape[axis + 1..]);
    out_shape.push(ext);
    let mut data = vec![0.0; a.numel()];
    for o in 0..outer {
        for k in 0..ext {
            for j in 0..inner {
                data[(o * inner + j) * ext + k] = a.data[(o * ext + k) * inner + j];
            }
        }
    }
    TensorData {
        shape: out_shape,
        data,
    }
}

/// Inverse of [`move_axis_last`], restoring `orig_shape`.
fn move_last_back(a: &TensorData, axis: usize, orig_shape: &[usize]) -> TensorData {
    let rank = orig_shape.len();
    if axis == rank - 1 {
        return TensorData {
            shape: orig_shape.to_vec(),
            data: a.data.clone(),
        };
    }
    let outer: usize = orig_shape[..axis].iter().product();
    let ext = orig_shape[axis];
    let inner: usize = orig_shape[axis + 1..].iter().product();
    let mut data = vec![0.0; a.numel()];
    for o in 0..outer {
        for k in 0..ext {
            for j in 0..inner {
                data[(o * ext + k) * inner + j] = a.data[(o * inner + j) * ext + k];
            }
        }
    }
    TensorData {
        shape: orig_shape.to_vec(),
        data,
    }
}
