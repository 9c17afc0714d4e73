//! Contracts of the grid-space building blocks: pointwise MLPs, the strip
//! gating block, and the multi-path feed-forward block.

use diff_engine::{grad_check, DiffError, Tape, Tensor, TensorData};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use shno_model::{ela, mpffn, ElaParams, ModelError, MpffnParams, PointwiseMlp};

fn randn(rng: &mut ChaCha12Rng, shape: &[usize], scale: f64) -> TensorData {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    TensorData::new(shape.to_vec(), data).unwrap()
}

fn zeros(shape: &[usize]) -> Tensor {
    Tensor::param(TensorData::zeros(shape))
}

fn to_diff(e: ModelError) -> DiffError {
    DiffError::InvalidArgument {
        op: "model block",
        details: e.to_string(),
    }
}

/// Fixed-weight scalar readout so gradient checks see every output entry.
fn readout(tape: &mut Tape, y: &Tensor, seed: u64) -> diff_engine::Result<Tensor> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let w = Tensor::constant(randn(&mut rng, y.shape(), 1.0));
    let p = tape.mul(y, &w)?;
    tape.sum_all(&p)
}

// ---- pointwise MLP ----

#[test]
fn pointwise_mlp_zero_weights_give_zero_output() {
    let mlp = PointwiseMlp {
        w1: zeros(&[3, 8]),
        b1: zeros(&[8, 1, 1]),
        w2: zeros(&[8, 5]),
        b2: zeros(&[5, 1, 1]),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let x = Tensor::constant(randn(&mut rng, &[2, 3, 4, 8], 1.0));
    let mut tape = Tape::new();
    let y = mlp.apply(&mut tape, &x).unwrap();
    assert_eq!(y.shape(), &[2, 5, 4, 8]);
    assert!(y.values().iter().all(|&v| v == 0.0));
}

#[test]
fn pointwise_mlp_touches_only_the_perturbed_cell() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mlp = PointwiseMlp::init(&mut rng, 3, 8, 5);
    let base = randn(&mut rng, &[1, 3, 4, 8], 1.0);
    let mut bumped = base.clone();
    // Perturb channel 1 of the cell (lat 2, lon 5).
    let cell = (2, 5);
    bumped.data[(1 * 4 + cell.0) * 8 + cell.1] += 0.75;

    let mut tape = Tape::disabled();
    let y0 = mlp.apply(&mut tape, &Tensor::constant(base)).unwrap();
    let y1 = mlp.apply(&mut tape, &Tensor::constant(bumped)).unwrap();

    for c in 0..5 {
        for i in 0..4 {
            for j in 0..8 {
                let d = (y0.values()[(c * 4 + i) * 8 + j] - y1.values()[(c * 4 + i) * 8 + j]).abs();
                if (i, j) == cell {
                    assert!(d > 1e-6, "perturbed cell should respond");
                } else {
                    assert_eq!(d, 0.0, "cell ({i},{j}) must not move");
                }
            }
        }
    }
}

#[test]
fn pointwise_mlp_gradient_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let inputs = vec![
        randn(&mut rng, &[1, 8, 4, 8], 0.5),
        randn(&mut rng, &[8, 8], 0.5),
        randn(&mut rng, &[8, 1, 1], 0.2),
        randn(&mut rng, &[8, 8], 0.5),
        randn(&mut rng, &[8, 1, 1], 0.2),
    ];
    let report = grad_check(
        |tape, ins| {
            let mlp = PointwiseMlp {
                w1: ins[1].clone(),
                b1: ins[2].clone(),
                w2: ins[3].clone(),
                b2: ins[4].clone(),
            };
            let y = mlp.apply(tape, &ins[0]).map_err(to_diff)?;
            readout(tape, &y, 30)
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-5,
        "pointwise gradient error {}",
        report.max_rel_err
    );
}

// ---- strip gating (ELA) ----

fn zeroed_ela(c: usize) -> ElaParams {
    ElaParams {
        lat_taps: zeros(&[c, 7]),
        lon_taps: zeros(&[c, 7]),
        lat_gamma: zeros(&[c, 1, 1]),
        lat_beta: zeros(&[c, 1, 1]),
        lon_gamma: zeros(&[c, 1, 1]),
        lon_beta: zeros(&[c, 1, 1]),
        eps: 1e-5,
    }
}

#[test]
fn ela_zero_weights_quarter_the_input() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let g = Tensor::constant(randn(&mut rng, &[2, 3, 8, 16], 1.0));
    let mut tape = Tape::new();
    let y = ela(&mut tape, &g, &zeroed_ela(3)).unwrap();
    // Both gates are sigmoid(0) = 1/2 exactly, so the output is exactly g/4.
    for (a, b) in y.values().iter().zip(g.values()) {
        assert_eq!(*a, 0.25 * b);
    }
}

#[test]
fn ela_preserves_shape() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let params = ElaParams::init(&mut rng, 3);
    let g = Tensor::constant(randn(&mut rng, &[1, 3, 16, 32], 1.0));
    let mut tape = Tape::new();
    let y = ela(&mut tape, &g, &params).unwrap();
    assert_eq!(y.shape(), &[1, 3, 16, 32]);
    assert!(y.values().iter().all(|v| v.is_finite()));
}

#[test]
fn ela_rejects_non_grid_input() {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let params = ElaParams::init(&mut rng, 3);
    let g = Tensor::constant(randn(&mut rng, &[3, 16, 32], 1.0));
    let mut tape = Tape::new();
    let err = ela(&mut tape, &g, &params).unwrap_err();
    assert!(err.to_string().contains("(batch, channels, lat, lon)"));
}

#[test]
fn ela_gradient_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let c = 2;
    let inputs = vec![
        randn(&mut rng, &[1, c, 8, 16], 0.5),
        randn(&mut rng, &[c, 7], 0.5),
        randn(&mut rng, &[c, 7], 0.5),
        randn(&mut rng, &[c, 1, 1], 0.3),
        randn(&mut rng, &[c, 1, 1], 0.3),
        randn(&mut rng, &[c, 1, 1], 0.3),
        randn(&mut rng, &[c, 1, 1], 0.3),
    ];
    let report = grad_check(
        |tape, ins| {
            let params = ElaParams {
                lat_taps: ins[1].clone(),
                lon_taps: ins[2].clone(),
                lat_gamma: ins[3].clone(),
                lat_beta: ins[4].clone(),
                lon_gamma: ins[5].clone(),
                lon_beta: ins[6].clone(),
                eps: 1e-5,
            };
            let y = ela(tape, &ins[0], &params).map_err(to_diff)?;
            readout(tape, &y, 31)
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-5,
        "ela gradient error {}",
        report.max_rel_err
    );
}

// ---- multi-path feed-forward ----

fn mpffn_from(ins: &[Tensor]) -> MpffnParams {
    MpffnParams {
        w_up: ins[1].clone(),
        b_up: ins[2].clone(),
        path_scales: [ins[3].clone(), ins[4].clone(), ins[5].clone()],
        w_down: ins[6].clone(),
        b_down: ins[7].clone(),
    }
}

#[test]
fn mpffn_zero_weights_give_zero_output() {
    let (c, hidden) = (3, 8);
    let params = MpffnParams {
        w_up: zeros(&[c, hidden]),
        b_up: zeros(&[hidden, 1, 1]),
        path_scales: [zeros(&[4, 1, 1]), zeros(&[2, 1, 1]), zeros(&[2, 1, 1])],
        w_down: zeros(&[hidden, c]),
        b_down: zeros(&[c, 1, 1]),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let g = Tensor::constant(randn(&mut rng, &[2, c, 8, 16], 1.0));
    let mut tape = Tape::new();
    let y = mpffn(&mut tape, &g, &params).unwrap();
    assert_eq!(y.shape(), g.shape());
    assert!(y.values().iter().all(|&v| v == 0.0));
}

#[test]
fn mpffn_keeps_constant_fields_constant() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let c = 4;
    let params = MpffnParams::init(&mut rng, c, 8).unwrap();
    // Each channel holds one constant value over the whole grid.
    let mut data = vec![0.0; c * 8 * 16];
    for ch in 0..c {
        let v: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        data[ch * 8 * 16..(ch + 1) * 8 * 16].fill(v);
    }
    let g = Tensor::constant(TensorData::new(vec![1, c, 8, 16], data).unwrap());
    let mut tape = Tape::new();
    let y = mpffn(&mut tape, &g, &params).unwrap();
    // Averaging stencils and pointwise maps both preserve spatial constancy.
    for ch in 0..c {
        let plane = &y.values()[ch * 8 * 16..(ch + 1) * 8 * 16];
        let spread = plane
            .iter()
            .map(|v| (v - plane[0]).abs())
            .fold(0.0, f64::max);
        assert!(spread < 1e-13, "channel {ch} varies by {spread}");
    }
}

#[test]
fn mpffn_gradient_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let (c, hidden) = (2, 8);
    let inputs = vec![
        randn(&mut rng, &[1, c, 8, 16], 0.5),
        randn(&mut rng, &[c, hidden], 0.5),
        randn(&mut rng, &[hidden, 1, 1], 0.2),
        randn(&mut rng, &[hidden / 2, 1, 1], 0.5),
        randn(&mut rng, &[hidden / 4, 1, 1], 0.5),
        randn(&mut rng, &[hidden / 4, 1, 1], 0.5),
        randn(&mut rng, &[hidden, c], 0.5),
        randn(&mut rng, &[c, 1, 1], 0.2),
    ];
    let report = grad_check(
        |tape, ins| {
            let y = mpffn(tape, &ins[0], &mpffn_from(ins)).map_err(to_diff)?;
            readout(tape, &y, 32)
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-5,
        "mpffn gradient error {}",
        report.max_rel_err
    );
}

#[test]
fn mpffn_rejects_widths_that_do_not_split() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let err = MpffnParams::init(&mut rng, 4, 6).unwrap_err();
    assert!(err.to_string().contains("multiple of 4"));
}
