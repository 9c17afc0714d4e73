//! Behavior of the tape itself: accumulation, determinism, custom ops,
//! detachment, error paths, and the complex layer.

use diff_engine::{
    grad_check, CTensor, CustomOp, DiffError, Result, Tape, Tensor, TensorData,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

fn rand_data(seed: u64, shape: &[usize]) -> TensorData {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    TensorData::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn shared_subexpression_accumulates_both_paths() {
    // loss = mean(x*x + x) so dloss/dx = (2x + 1)/n.
    let x = Tensor::param(rand_data(1, &[3, 3]));
    let mut tape = Tape::new();
    let sq = tape.mul(&x, &x).unwrap();
    let sum = tape.add(&sq, &x).unwrap();
    let loss = tape.mean_all(&sum).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let g = grads.get(&x).unwrap();
    for (gv, xv) in g.data.iter().zip(x.values()) {
        assert!((gv - (2.0 * xv + 1.0) / 9.0).abs() < 1e-14);
    }
}

#[test]
fn gradients_keep_leaves_only() {
    let x = Tensor::param(rand_data(2, &[4]));
    let c = Tensor::constant(rand_data(3, &[4]));
    let mut tape = Tape::new();
    let y = tape.mul(&x, &c).unwrap();
    let z = tape.exp(&y).unwrap();
    let loss = tape.sum_all(&z).unwrap();
    let grads = tape.backward(&loss).unwrap();
    assert!(grads.get(&x).is_some());
    // Intermediates are consumed and dropped; constants never tracked.
    assert!(grads.get(&y).is_none());
    assert!(grads.get(&z).is_none());
    assert!(grads.get(&c).is_none());
    assert_eq!(grads.len(), 1);
}

#[test]
fn backward_is_bit_deterministic() {
    let x = Tensor::param(rand_data(4, &[6, 6]));
    let w = Tensor::param(rand_data(5, &[6, 6]));
    let run = || {
        let mut tape = Tape::new();
        let h = tape.matmul(&x, &w).unwrap();
        let g = tape.gelu(&h).unwrap();
        let s = tape.softmax(&g).unwrap();
        let loss = tape.mean_all(&s).unwrap();
        let grads = tape.backward(&loss).unwrap();
        (
            grads.get(&x).unwrap().data.clone(),
            grads.get(&w).unwrap().data.clone(),
        )
    };
    let (gx1, gw1) = run();
    let (gx2, gw2) = run();
    assert_eq!(gx1, gx2, "gradient of x differs between identical runs");
    assert_eq!(gw1, gw2);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let x = Tensor::param(rand_data(6, &[3]));
    let mut tape = Tape::new();
    let y = tape.exp(&x).unwrap();
    match tape.backward(&y) {
        Err(DiffError::NonScalarLoss(shape)) => assert_eq!(shape, vec![3]),
        other => panic!("expected NonScalarLoss, got {other:?}"),
    }
}

#[test]
fn detached_tensors_block_gradient_flow() {
    let x = Tensor::param(rand_data(7, &[4]));
    let mut tape = Tape::new();
    let y = tape.mul(&x, &x).unwrap();
    let frozen = y.detached();
    let z = tape.mul(&x, &frozen).unwrap(); // only the direct x factor is live
    let loss = tape.sum_all(&z).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let g = grads.get(&x).unwrap();
    for (gv, xv) in g.data.iter().zip(x.values()) {
        // d/dx of x * const(x^2) = x^2, not 3x^2.
        assert!((gv - xv * xv).abs() < 1e-14);
    }
}

#[test]
fn disabled_tape_records_nothing() {
    let x = Tensor::param(rand_data(8, &[4]));
    let mut tape = Tape::disabled();
    let y = tape.mul(&x, &x).unwrap();
    assert!(!y.requires_grad());
    assert_eq!(tape.len(), 0);
}

/// A custom op with two outputs: (2x, x reversed). Exercises multi-output
/// records and partially used outputs.
#[derive(Debug)]
struct DoubleAndFlip;

impl CustomOp for DoubleAndFlip {
    fn name(&self) -> &'static str {
        "double_and_flip"
    }

    fn forward(&self, inputs: &[&TensorData]) -> Result<Vec<TensorData>> {
        let x = inputs[0];
        let doubled = TensorData {
            shape: x.shape.clone(),
            data: x.data.iter().map(|v| 2.0 * v).collect(),
        };
        let flipped = TensorData {
            shape: x.shape.clone(),
            data: x.data.iter().rev().copied().collect(),
        };
        Ok(vec![doubled, flipped])
    }

    fn backward(
        &self,
        inputs: &[&TensorData],
        _outputs: &[&TensorData],
        out_grads: &[Option<&TensorData>],
    ) -> Result<Vec<Option<TensorData>>> {
        let mut g = TensorData::zeros(&inputs[0].shape);
        if let Some(gd) = out_grads[0] {
            for (o, v) in g.data.iter_mut().zip(&gd.data) {
                *o += 2.0 * v;
            }
        }
        if let Some(gf) = out_grads[1] {
            for (o, v) in g.data.iter_mut().zip(gf.data.iter().rev()) {
                *o += v;
            }
        }
        Ok(vec![Some(g)])
    }
}

#[test]
fn custom_op_multi_output_gradcheck() {
    let report = grad_check(
        |tape, xs| {
            let outs = tape.apply(Arc::new(DoubleAndFlip), &[&xs[0]])?;
            let prod = tape.mul(&outs[0], &outs[1])?;
            tape.mean_all(&prod)
        },
        &[rand_data(9, &[5])],
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
}

#[test]
fn custom_op_with_unused_output() {
    let x = Tensor::param(rand_data(10, &[5]));
    let mut tape = Tape::new();
    let outs = tape.apply(Arc::new(DoubleAndFlip), &[&x]).unwrap();
    // Only output 0 participates; backward must see None for output 1.
    let loss = tape.sum_all(&outs[0]).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let g = grads.get(&x).unwrap();
    for gv in &g.data {
        assert!((gv - 2.0).abs() < 1e-14);
    }
}

#[test]
fn complex_matmul_matches_reference() {
    let ar = rand_data(11, &[3, 4]);
    let ai = rand_data(12, &[3, 4]);
    let br = rand_data(13, &[4, 2]);
    let bi = rand_data(14, &[4, 2]);
    let mut tape = Tape::new();
    let a = CTensor::new(Tensor::constant(ar.clone()), Tensor::constant(ai.clone())).unwrap();
    let b = CTensor::new(Tensor::constant(br.clone()), Tensor::constant(bi.clone())).unwrap();
    let y = a.matmul(&mut tape, &b).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let mut re = 0.0;
            let mut im = 0.0;
            for k in 0..4 {
                let (xr, xi) = (ar.data[i * 4 + k], ai.data[i * 4 + k]);
                let (yr, yi) = (br.data[k * 2 + j], bi.data[k * 2 + j]);
                re += xr * yr - xi * yi;
                im += xr * yi + xi * yr;
            }
            assert!((y.re.values()[i * 2 + j] - re).abs() < 1e-12);
            assert!((y.im.values()[i * 2 + j] - im).abs() < 1e-12);
        }
    }
}

#[test]
fn complex_pipeline_gradcheck() {
    // tril(B) tril(B)^H style Hermitian product, then |.|^2 readout: the
    // shape of computation the attention blocks use.
    let report = grad_check(
        |tape, xs| {
            let b = CTensor::new(xs[0].clone(), xs[1].clone())?;
            let t = b.tril(tape)?;
            let th = t.conj_t(tape)?;
            let a = t.matmul(tape, &th)?;
            let d = a.sum_last(tape)?;
            let gated = a.hadamard(tape, &b)?;
            let e1 = gated.abs_sqr(tape)?;
            let e2 = d.abs_sqr(tape)?;
            let s1 = tape.mean_all(&e1)?;
            let s2 = tape.mean_all(&e2)?;
            tape.add(&s1, &s2)
        },
        &[rand_data(15, &[4, 4]), rand_data(16, &[4, 4])],
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-5, "rel err {}", report.max_rel_err);
}

#[test]
fn optimizer_style_inplace_update_is_isolated_from_old_graph() {
    let mut w = Tensor::param(rand_data(17, &[3]));
    let mut tape = Tape::new();
    let y = tape.mul(&w, &w).unwrap();
    let loss = tape.sum_all(&y).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let g0 = grads.get(&w).unwrap().data.clone();
    // Mutating the value must not corrupt the already-computed gradient or
    // the recorded graph (copy-on-write storage).
    let before = w.values().to_vec();
    for v in w.values_mut() {
        *v += 1.0;
    }
    assert_eq!(grads.get(&w).unwrap().data, g0);
    let grads2 = tape.backward(&loss).unwrap();
    // Old tape still sees the old values.
    for ((g2, _g1), x0) in grads2
        .get(&w)
        .unwrap()
        .data
        .iter()
        .zip(&g0)
        .zip(&before)
    {
        assert!((g2 - 2.0 * x0).abs() < 1e-14);
    }
}
