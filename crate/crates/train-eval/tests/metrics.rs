//! Losses, weights, verification metrics, schedule and optimizer contracts.

use diff_engine::{grad_check, DiffError, Tape, Tensor, TensorData};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use sht_core::{GridField, SphericalGrid};
use std::sync::Arc;
use train_eval::{
    acc, climatology, geometric_relative_loss, latitude_weighted_l2, latitude_weights,
    lr_schedule, relative_loss_per_variable, rmse, AdamW, AdamWConfig, MetricWeights,
    NonFinitePolicy, OptimState, Standardizer, StepOutcome, TrainError,
};

fn randn(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn grid(nlat: usize, nlon: usize) -> Arc<SphericalGrid> {
    Arc::new(SphericalGrid::gaussian(nlat, nlon, 1.0).unwrap())
}

fn field(g: &Arc<SphericalGrid>, channels: usize, values: Vec<f64>) -> GridField {
    GridField::from_values(Arc::clone(g), channels, values).unwrap()
}

fn to_diff(e: TrainError) -> DiffError {
    DiffError::InvalidArgument {
        op: "loss",
        details: e.to_string(),
    }
}

// ---- latitude weights ----

#[test]
fn cosine_weights_match_hand_values() {
    let d = std::f64::consts::PI / 180.0;
    let mw = MetricWeights::from_lats_rad(&[60.0 * d, 0.0, -60.0 * d]);
    let expect = [0.75, 1.5, 0.75];
    for (w, e) in mw.w.iter().zip(expect) {
        assert!((w - e).abs() < 1e-12, "weight {w} vs {e}");
    }
    let mw = MetricWeights::from_lats_rad(&[45.0 * d, -45.0 * d]);
    assert!((mw.w[0] - 1.0).abs() < 1e-12 && (mw.w[1] - 1.0).abs() < 1e-12);
}

#[test]
fn gaussian_grid_weights_average_to_one() {
    for (nlat, nlon) in [(8, 16), (16, 32), (32, 64)] {
        let g = grid(nlat, nlon);
        let mw = latitude_weights(&g);
        let mean = mw.w.iter().sum::<f64>() / nlat as f64;
        assert!((mean - 1.0).abs() < 1e-12, "mean {mean} on {nlat}x{nlon}");
        assert!(mw.w.iter().all(|&w| w > 0.0));
        assert_eq!(mw.quad_w, g.quad_weights());
    }
}

// ---- losses ----

#[test]
fn weighted_l2_identities() {
    let g = grid(8, 16);
    let mw = latitude_weights(&g);
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let shape = vec![1, 2, 8, 16];
    let t = Tensor::constant(TensorData::new(shape.clone(), randn(&mut rng, 256, 1.0)).unwrap());
    let mut tape = Tape::disabled();

    let zero = latitude_weighted_l2(&mut tape, &t, &t, &mw).unwrap();
    assert_eq!(zero.item().unwrap(), 0.0);

    let shifted = tape.affine(&t, 1.0, 1.0).unwrap();
    let one = latitude_weighted_l2(&mut tape, &shifted, &t, &mw).unwrap();
    assert!((one.item().unwrap() - 1.0).abs() < 1e-12);

    // A single erroneous cell at latitude i contributes w_i e² / (C·H·W).
    let (i, j, e) = (3, 5, 0.3);
    let mut v = t.values().to_vec();
    v[1 * 128 + i * 16 + j] += e;
    let p = Tensor::constant(TensorData::new(shape, v).unwrap());
    let cell = latitude_weighted_l2(&mut tape, &p, &t, &mw).unwrap();
    let expect = mw.w[i] * e * e / (2.0 * 8.0 * 16.0);
    assert!((cell.item().unwrap() - expect).abs() < 1e-12);
}

#[test]
fn relative_loss_identities() {
    let g = grid(8, 16);
    let mw = latitude_weights(&g);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let shape = vec![2, 3, 8, 16];
    let t = Tensor::constant(TensorData::new(shape.clone(), randn(&mut rng, 768, 1.0)).unwrap());
    let mut tape = Tape::disabled();

    let zero = geometric_relative_loss(&mut tape, &t, &t, &mw).unwrap();
    assert_eq!(zero.item().unwrap(), 0.0);

    let null = Tensor::constant(TensorData::zeros(&shape));
    let one = geometric_relative_loss(&mut tape, &null, &t, &mw).unwrap();
    assert!((one.item().unwrap() - 1.0).abs() < 1e-12);

    let doubled = tape.affine(&t, 2.0, 0.0).unwrap();
    let alias = geometric_relative_loss(&mut tape, &doubled, &t, &mw).unwrap();
    assert!((alias.item().unwrap() - 1.0).abs() < 1e-12);

    // A truth channel that is identically zero has no relative scale.
    let mut v = t.values().to_vec();
    v[128..256].iter_mut().for_each(|x| *x = 0.0);
    let degenerate = Tensor::constant(TensorData::new(shape, v).unwrap());
    match geometric_relative_loss(&mut tape, &t, &degenerate, &mw) {
        Err(TrainError::ZeroDenominator { channel: 1 }) => {}
        other => panic!("expected a zero-denominator error, got {other:?}"),
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let g = grid(4, 8);
    let mw = latitude_weights(&g);
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let truth = Tensor::constant(TensorData::new(vec![1, 2, 4, 8], randn(&mut rng, 64, 1.0)).unwrap());
    let pred = TensorData::new(vec![1, 2, 4, 8], randn(&mut rng, 64, 1.0)).unwrap();

    for which in 0..2 {
        let report = grad_check(
            |tape, ins| {
                if which == 0 {
                    geometric_relative_loss(tape, &ins[0], &truth, &mw).map_err(to_diff)
                } else {
                    latitude_weighted_l2(tape, &ins[0], &truth, &mw).map_err(to_diff)
                }
            },
            std::slice::from_ref(&pred),
            1e-5,
        )
        .unwrap();
        assert!(
            report.max_rel_err < 1e-6,
            "loss {which} gradient error {}",
            report.max_rel_err
        );
    }
}

// ---- verification metrics ----

#[test]
fn rmse_identities() {
    let g = grid(8, 16);
    let mw = latitude_weights(&g);
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let t = field(&g, 2, randn(&mut rng, 256, 1.0));

    let zero = rmse(std::slice::from_ref(&t), std::slice::from_ref(&t), &mw).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));

    let f = field(&g, 2, t.values().iter().map(|v| v + 1.0).collect());
    let one = rmse(std::slice::from_ref(&f), std::slice::from_ref(&t), &mw).unwrap();
    assert!(one.iter().all(|&v| (v - 1.0).abs() < 1e-12));

    // Per-forecast square roots average arithmetically: errors 1 and 3 → 2.
    let f3 = field(&g, 2, t.values().iter().map(|v| v + 3.0).collect());
    let two = rmse(&[f.clone(), f3], &[t.clone(), t.clone()], &mw).unwrap();
    assert!(two.iter().all(|&v| (v - 2.0).abs() < 1e-12));

    // Variables are scored independently.
    let mut v = t.values().to_vec();
    v[..128].iter_mut().for_each(|x| *x += 1.0);
    let ch0 = field(&g, 2, v);
    let per_var = rmse(std::slice::from_ref(&ch0), std::slice::from_ref(&t), &mw).unwrap();
    assert!((per_var[0] - 1.0).abs() < 1e-12 && per_var[1] == 0.0);
}

#[test]
fn rmse_is_longitude_rotation_invariant() {
    let g = grid(8, 16);
    let mw = latitude_weights(&g);
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let f = field(&g, 2, randn(&mut rng, 256, 1.0));
    let t = field(&g, 2, randn(&mut rng, 256, 1.0));
    let rotate = |x: &GridField, s: usize| -> GridField {
        let (h, w) = (8, 16);
        let mut out = vec![0.0; x.values().len()];
        for c in 0..2 {
            for i in 0..h {
                for j in 0..w {
                    out[c * h * w + i * w + (j + s) % w] = x.channel(c)[i * w + j];
                }
            }
        }
        field(&g, 2, out)
    };
    let base = rmse(std::slice::from_ref(&f), std::slice::from_ref(&t), &mw).unwrap();
    let rot = rmse(
        std::slice::from_ref(&rotate(&f, 5)),
        std::slice::from_ref(&rotate(&t, 5)),
        &mw,
    )
    .unwrap();
    for (a, b) in base.iter().zip(&rot) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn acc_identities() {
    let g = grid(8, 16);
    let mw = latitude_weights(&g);
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let clim = field(&g, 2, randn(&mut rng, 256, 1.0));
    let anom = randn(&mut rng, 256, 0.7);
    let with_anomaly = |s: f64| -> GridField {
        field(
            &g,
            2,
            clim.values()
                .iter()
                .zip(&anom)
                .map(|(c, a)| c + s * a)
                .collect(),
        )
    };
    let truth = with_anomaly(1.0);

    for (scale, expect) in [(1.0, 1.0), (-1.0, -1.0), (2.0, 1.0), (0.37, 1.0)] {
        let f = with_anomaly(scale);
        let r = acc(
            std::slice::from_ref(&f),
            std::slice::from_ref(&truth),
            &clim,
            &mw,
        )
        .unwrap();
        assert!(
            r.iter().all(|&v| (v - expect).abs() < 1e-12),
            "scale {scale}: {r:?}"
        );
    }

    match acc(
        std::slice::from_ref(&clim),
        std::slice::from_ref(&clim),
        &clim,
        &mw,
    ) {
        Err(TrainError::ZeroAnomalyVariance { variable: 0 }) => {}
        other => panic!("expected zero anomaly variance, got {other:?}"),
    }
}

#[test]
fn climatology_is_the_pointwise_time_mean() {
    let g = grid(4, 8);
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let a = field(&g, 1, randn(&mut rng, 32, 1.0));
    let b = field(&g, 1, randn(&mut rng, 32, 1.0));
    let c = climatology(&[a.clone(), b.clone()]).unwrap();
    for ((x, y), m) in a.values().iter().zip(b.values()).zip(c.values()) {
        assert!(((x + y) / 2.0 - m).abs() < 1e-15);
    }
    assert!(climatology(&[]).is_err());
}

#[test]
fn relative_loss_per_variable_matches_the_batched_loss() {
    let g = grid(8, 16);
    let mw = latitude_weights(&g);
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let p = field(&g, 3, randn(&mut rng, 384, 1.0));
    let t = field(&g, 3, randn(&mut rng, 384, 1.0));
    let per_var = relative_loss_per_variable(&p, &t, &mw).unwrap();

    let mut tape = Tape::disabled();
    let pt = Tensor::constant(TensorData::new(vec![1, 3, 8, 16], p.values().to_vec()).unwrap());
    let tt = Tensor::constant(TensorData::new(vec![1, 3, 8, 16], t.values().to_vec()).unwrap());
    let batched = geometric_relative_loss(&mut tape, &pt, &tt, &mw)
        .unwrap()
        .item()
        .unwrap();
    let mean = per_var.iter().sum::<f64>() / 3.0;
    assert!((batched - mean).abs() < 1e-12, "{batched} vs {mean}");
}

// ---- schedule ----

#[test]
fn schedule_hits_the_documented_markers() {
    let (total, warmup, peak, min) = (11, 2, 2.0e-4, 2.0e-5);
    // Linear ramp: peak·(e+1)/warmup during warmup.
    assert_eq!(lr_schedule(0, total, warmup, peak, min), peak * 0.5);
    assert_eq!(lr_schedule(1, total, warmup, peak, min), peak);
    // Cosine starts at the peak...
    assert_eq!(lr_schedule(warmup, total, warmup, peak, min), peak);
    // ...ends exactly at the floor...
    assert_eq!(lr_schedule(total - 1, total, warmup, peak, min), min);
    // ...and passes through the midpoint halfway.
    let mid = lr_schedule(warmup + 4, total, warmup, peak, min);
    assert!((mid - 0.5 * (peak + min)).abs() < 1e-12);
    // Non-increasing through the cosine phase; clamped past the end.
    for e in warmup..total - 1 {
        assert!(
            lr_schedule(e + 1, total, warmup, peak, min) <= lr_schedule(e, total, warmup, peak, min)
        );
    }
    assert_eq!(lr_schedule(total + 5, total, warmup, peak, min), min);
    // No warmup: the first epoch already runs at the peak.
    assert_eq!(lr_schedule(0, 10, 0, peak, min), peak);
}

// ---- optimizer ----

/// Run one step where the gradient of `param` is exactly `g` (loss is the
/// inner product with a constant), under the given config and lr.
fn step_with_gradient(
    param: &mut Tensor,
    g: &[f64],
    cfg: AdamWConfig,
    lr: f64,
) -> (StepOutcome, OptimState) {
    let mut tape = Tape::new();
    let weights = Tensor::constant(TensorData::new(vec![g.len()], g.to_vec()).unwrap());
    let prod = tape.mul(param, &weights).unwrap();
    let loss = tape.sum_all(&prod).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let mut opt = AdamW::new(cfg);
    let mut params = vec![("p".to_string(), param)];
    let outcome = opt.step(&mut params, &grads, lr).unwrap();
    (outcome, opt.state().clone())
}

#[test]
fn zero_gradient_and_zero_decay_leave_parameters_unchanged() {
    let before = vec![0.75, -1.25, 3.0];
    let mut p = Tensor::param(TensorData::new(vec![3], before.clone()).unwrap());
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let (outcome, state) = step_with_gradient(&mut p, &[0.0, 0.0, 0.0], cfg, 1e-3);
    assert_eq!(outcome, StepOutcome::Applied);
    assert_eq!(state.step, 1);
    assert_eq!(p.values(), &before[..]);
}

#[test]
fn first_step_matches_the_hand_formula() {
    // g chosen so g² and √(g²) are exact in binary floating point.
    let p0 = [0.75, -1.25];
    let g = [0.5, -0.25];
    let (lr, wd, eps) = (1e-3, 1e-5, 1e-8);
    let mut p = Tensor::param(TensorData::new(vec![2], p0.to_vec()).unwrap());
    let cfg = AdamWConfig {
        weight_decay: wd,
        eps,
        ..AdamWConfig::default()
    };
    let (outcome, state) = step_with_gradient(&mut p, &g, cfg, lr);
    assert_eq!(outcome, StepOutcome::Applied);
    assert_eq!(state.step, 1);
    // After bias correction the first step sees m̂ = g and v̂ = g², so
    // p ← p − lr·g/(|g|+ε) − lr·wd·p.
    for i in 0..2 {
        let expect = p0[i] - lr * g[i] / (g[i].abs() + eps) - lr * wd * p0[i];
        assert!(
            (p.values()[i] - expect).abs() < 1e-16,
            "{} vs {expect}",
            p.values()[i]
        );
    }
}

#[test]
fn decay_only_step_is_the_decoupled_decay() {
    let p0 = [2.0, -4.0];
    let (lr, wd) = (1e-2, 0.5);
    let mut p = Tensor::param(TensorData::new(vec![2], p0.to_vec()).unwrap());
    let cfg = AdamWConfig {
        weight_decay: wd,
        ..AdamWConfig::default()
    };
    step_with_gradient(&mut p, &[0.0, 0.0], cfg, lr);
    for i in 0..2 {
        assert_eq!(p.values()[i], p0[i] - lr * wd * p0[i]);
    }
}

#[test]
fn nonfinite_gradients_follow_the_configured_policy() {
    let before = vec![1.0, 2.0];
    let mut p = Tensor::param(TensorData::new(vec![2], before.clone()).unwrap());
    let (outcome, state) = step_with_gradient(
        &mut p,
        &[f64::INFINITY, 0.0],
        AdamWConfig::default(),
        1e-3,
    );
    assert_eq!(
        outcome,
        StepOutcome::SkippedNonFinite {
            name: "p".to_string()
        }
    );
    assert_eq!(state.step, 0, "a skipped step must not advance the state");
    assert!(state.moments.is_empty());
    assert_eq!(p.values(), &before[..]);

    // Fail policy: same situation is an error.
    let mut tape = Tape::new();
    let weights = Tensor::constant(TensorData::new(vec![2], vec![f64::NAN, 0.0]).unwrap());
    let prod = tape.mul(&p, &weights).unwrap();
    let loss = tape.sum_all(&prod).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let mut opt = AdamW::new(AdamWConfig {
        nonfinite: NonFinitePolicy::Fail,
        ..AdamWConfig::default()
    });
    let mut params = vec![("p".to_string(), &mut p)];
    match opt.step(&mut params, &grads, 1e-3) {
        Err(TrainError::NonFiniteGradient { name }) => assert_eq!(name, "p"),
        other => panic!("expected a non-finite gradient error, got {other:?}"),
    }
}

#[test]
fn optimizer_state_round_trips_bitwise() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let mut state = OptimState::default();
    state.step = 41;
    state
        .moments
        .insert("layer0.w".into(), (randn(&mut rng, 6, 1.0), randn(&mut rng, 6, 1.0)));
    state
        .moments
        .insert("encoder.b1".into(), (randn(&mut rng, 3, 1.0), randn(&mut rng, 3, 1.0)));
    let flat = state.flatten();
    let back = OptimState::from_flat(&flat).unwrap();
    assert_eq!(back, state);
    for (name, (m, v)) in &state.moments {
        let (bm, bv) = &back.moments[name];
        assert!(m.iter().zip(bm).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(v.iter().zip(bv).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    assert!(OptimState::from_flat(&[("m.x".into(), vec![1.0])]).is_err());
    assert!(OptimState::from_flat(&[
        ("step".into(), vec![1.0]),
        ("m.x".into(), vec![1.0]),
        ("v.x".into(), vec![1.0, 2.0]),
    ])
    .is_err());
    assert!(OptimState::from_flat(&[("step".into(), vec![1.0]), ("junk".into(), vec![])]).is_err());
}

#[test]
fn mismatched_moment_shapes_are_an_error() {
    let mut state = OptimState::default();
    state.moments.insert("p".into(), (vec![0.0; 5], vec![0.0; 5]));
    let mut opt = AdamW::from_state(AdamWConfig::default(), state);
    let mut p = Tensor::param(TensorData::new(vec![2], vec![1.0, 2.0]).unwrap());
    let mut tape = Tape::new();
    let c = Tensor::constant(TensorData::new(vec![2], vec![1.0, 1.0]).unwrap());
    let prod = tape.mul(&p, &c).unwrap();
    let loss = tape.sum_all(&prod).unwrap();
    let grads = tape.backward(&loss).unwrap();
    let mut params = vec![("p".to_string(), &mut p)];
    match opt.step(&mut params, &grads, 1e-3) {
        Err(TrainError::StateShape { got: 5, expected: 2, .. }) => {}
        other => panic!("expected a state shape error, got {other:?}"),
    }
}

// ---- standardizer ----

#[test]
fn standardizer_normalizes_and_inverts() {
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    // Two channels with very different scales plus offsets.
    let snaps: Vec<Vec<f64>> = (0..5)
        .map(|_| {
            let mut s = randn(&mut rng, 32, 500.0);
            s.iter_mut().take(16).for_each(|v| *v += 3.0e4);
            s.iter_mut().skip(16).for_each(|v| *v *= 1e-3);
            s
        })
        .collect();
    let views: Vec<&[f64]> = snaps.iter().map(|s| s.as_slice()).collect();
    let st = Standardizer::fit(views.iter().copied(), 2).unwrap();

    let mut all: Vec<f64> = snaps.concat();
    let original = all.clone();
    st.apply(&mut all, 16).unwrap();
    for c in 0..2 {
        let vals: Vec<f64> = all
            .chunks(16)
            .enumerate()
            .filter(|(k, _)| k % 2 == c)
            .flat_map(|(_, b)| b.iter().copied())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-12, "channel {c} mean {mean}");
        assert!((var - 1.0).abs() < 1e-10, "channel {c} variance {var}");
    }
    st.invert(&mut all, 16).unwrap();
    for (a, b) in all.iter().zip(&original) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn constant_channels_standardize_to_zero() {
    let snap = vec![7.5; 8];
    let st = Standardizer::fit([snap.as_slice()], 1).unwrap();
    assert_eq!(st.std[0], 1.0);
    let mut buf = snap;
    st.apply(&mut buf, 8).unwrap();
    assert!(buf.iter().all(|&v| v == 0.0));
}

#[test]
fn identity_standardizer_is_bit_exact() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let st = Standardizer::identity(2);
    let mut buf = randn(&mut rng, 64, 3.0);
    let original = buf.clone();
    st.apply(&mut buf, 32).unwrap();
    st.invert(&mut buf, 32).unwrap();
    assert!(buf
        .iter()
        .zip(&original)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}
