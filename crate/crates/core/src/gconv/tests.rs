use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffgraph::gradcheck::check_gradients;
use crate::diffgraph::{Graph, Tensor};
use crate::lie::{
    rotate_quarter_turns, sample_algebra, AlgebraSampleSet, GroupId, Image, Interval, Resample,
};

fn so2_layer(
    in_samples: AlgebraSampleSet,
    out_points: AlgebraSampleSet,
    c_in: usize,
    c_out: usize,
    strict: bool,
    seed: u64,
) -> (LieConvLayer, ParamStore) {
    let cfg = LayerConfig {
        group: in_samples.group,
        c_in,
        c_out,
        kernel_hidden: 8,
        kernel_bound: 1.0,
        activation: Activation::Sigmoid,
        strict_mode: strict,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = LieConvLayer::new(&cfg, in_samples, out_points, &mut store, "l", &mut rng).unwrap();
    (layer, store)
}

fn so2_samples(n: usize, seed: u64) -> AlgebraSampleSet {
    let grp = GroupId::SO2.descriptor();
    sample_algebra(grp, &grp.default_bounds(), n, seed).unwrap()
}

fn run_layer(layer: &LieConvLayer, store: &ParamStore, f: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let x = g.constant(f.clone());
    let y = lie_conv_forward(layer, &mut g, &p, x).unwrap();
    g.value(y).clone()
}

#[test]
fn constant_signal_is_averaged() {
    let s = so2_samples(5, 3);
    let (layer, mut store) = so2_layer(s.clone(), s, 1, 1, false, 1);
    store.get_mut(layer.kernel.w2).fill(0.0);
    store.get_mut(layer.kernel.b2).fill(1.0);
    assert!((layer.vol_scale(&store) - 0.2).abs() < 1e-15);
    let out = run_layer(&layer, &store, &Tensor::filled(&[5, 1], 2.5));
    assert!(out.data().iter().all(|v| (v - 2.5).abs() < 1e-12), "{out:?}");
}

#[test]
fn layer_is_linear_in_the_signal() {
    for n in 1..=8 {
        let s = so2_samples(n, 10 + n as u64);
        let (layer, store) = so2_layer(s.clone(), s, 2, 3, false, n as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(99 + n as u64);
        let f1 = Tensor::uniform(&[n, 2], 1.0, &mut rng);
        let f2 = Tensor::uniform(&[n, 2], 1.0, &mut rng);
        let (a, b) = (0.7, -1.9);
        let mix = Tensor::new(
            vec![n, 2],
            f1.data().iter().zip(f2.data()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let (o1, o2, om) = (
            run_layer(&layer, &store, &f1),
            run_layer(&layer, &store, &f2),
            run_layer(&layer, &store, &mix),
        );
        for i in 0..om.len() {
            let want = a * o1.data()[i] + b * o2.data()[i];
            assert!((om.data()[i] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn strict_c4_layer_commutes_with_grid_shifts() {
    let c4 = AlgebraSampleSet::c4_grid();
    let (layer, store) = so2_layer(c4.clone(), c4, 2, 3, true, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = Tensor::uniform(&[4, 2], 1.0, &mut rng);
    let out = run_layer(&layer, &store, &f);
    for shift in 0..4 {
        let mut shifted = vec![0.0; 8];
        for i in 0..4 {
            let src = (i + 4 - shift) % 4;
            shifted[i * 2..i * 2 + 2].copy_from_slice(&f.data()[src * 2..src * 2 + 2]);
        }
        let out_s = run_layer(&layer, &store, &Tensor::new(vec![4, 2], shifted).unwrap());
        for j in 0..4 {
            let src = (j + 4 - shift) % 4;
            for c in 0..3 {
                let d = out_s.data()[j * 3 + c] - out.data()[src * 3 + c];
                assert!(d.abs() < 1e-10, "shift {shift}: {d}");
            }
        }
    }
}

#[test]
fn strict_mode_never_touches_the_mapping_net() {
    let s = so2_samples(4, 2);
    for strict in [true, false] {
        let (layer, store) = so2_layer(s.clone(), s.clone(), 2, 2, strict, 3);
        let mut g = Graph::new();
        let p = store.bind(&mut g, true);
        let f = g.constant(Tensor::uniform(&[4, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(1)));
        let y = lie_conv_forward(&layer, &mut g, &p, f).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        let w = p.node(layer.mapping.weight);
        assert_eq!(g.is_consumed(w), !strict);
        let grad_norm: f64 = g.grad(w).data().iter().map(|v| v.abs()).sum();
        assert_eq!(grad_norm > 0.0, !strict);
    }
}

fn layer_gradcheck(group: GroupId, strict: bool, seed: u64) -> f64 {
    let grp = group.descriptor();
    let s = sample_algebra(grp, &grp.default_bounds(), 3, seed).unwrap();
    let cfg = LayerConfig {
        group: grp,
        c_in: 2,
        c_out: 2,
        kernel_hidden: 4,
        kernel_bound: 1.0,
        activation: Activation::Sigmoid,
        strict_mode: strict,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let layer = LieConvLayer::new(&cfg, s.clone(), s, &mut store, "l", &mut rng).unwrap();
    let mut inputs = store.tensors().to_vec();
    inputs.push(Tensor::uniform(&[3, 2], 1.0, &mut rng));
    let np = store.len();
    check_gradients(&inputs, 1e-6, |g, x| {
        let p = Bound::from_nodes(x[..np].to_vec());
        let y = lie_conv_forward(&layer, g, &p, x[np]).map_err(|e| match e {
            ModelError::Graph(e) => e,
            other => crate::diffgraph::GraphError::InvalidArgument(other.to_string()),
        })?;
        let sq = g.mul(y, y)?;
        g.sum(sq)
    })
    .unwrap()
    .max_rel_err
}

#[test]
fn layer_gradients_match_finite_differences() {
    for (k, group) in GroupId::ALL.into_iter().enumerate() {
        for strict in [false, true] {
            let err = layer_gradcheck(group, strict, k as u64);
            assert!(err < 1e-4, "{group} strict={strict}: {err}");
        }
    }
}

#[test]
fn singular_mapping_output_names_the_sample() {
    let grp = GroupId::SO2.descriptor();
    let s = AlgebraSampleSet::from_coeffs(
        grp,
        grp.default_bounds(),
        vec![vec![-1.0], vec![-0.5], vec![2.0], vec![-2.0]],
    )
    .unwrap();
    let cfg = LayerConfig {
        group: grp,
        c_in: 1,
        c_out: 1,
        kernel_hidden: 2,
        kernel_bound: 1.0,
        activation: Activation::Relu,
        strict_mode: false,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = LieConvLayer::new(&cfg, s.clone(), s, &mut store, "l", &mut rng).unwrap();
    store.get_mut(layer.mapping.weight).fill(1e3);
    store.get_mut(layer.mapping.bias).fill(0.0);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let f = g.constant(Tensor::ones(&[4, 1]));
    match lie_conv_forward(&layer, &mut g, &p, f) {
        Err(ModelError::Singular { sample, condition }) => {
            assert_eq!(sample, 2);
            assert!(condition >= 1e8);
        }
        other => panic!("expected singular error, got {other:?}"),
    }
}

#[test]
fn wrong_signal_shape_is_rejected() {
    let s = so2_samples(3, 1);
    let (layer, store) = so2_layer(s.clone(), s, 2, 2, false, 1);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let f = g.constant(Tensor::ones(&[4, 2]));
    assert!(matches!(lie_conv_forward(&layer, &mut g, &p, f), Err(ModelError::Config(_))));
}

fn glyph(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Tensor::uniform(&[n * n], 1.0, &mut rng);
    Image::from_vec(n, n, 1, t.data().iter().map(|v| v.abs()).collect()).unwrap()
}

fn lift_rows(lift: &ImageLift, store: &ParamStore, img: &Image) -> Tensor {
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let y = lift.forward(&mut g, &p, std::slice::from_ref(img)).unwrap();
    g.value(y).clone()
}

#[test]
fn constant_image_lifts_to_identical_rows() {
    let s = so2_samples(7, 4);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lift = ImageLift::new(&s, 12, 12, 1, 5, 3, Resample::Bilinear, &mut store, &mut rng).unwrap();
    let img = Image::from_vec(12, 12, 1, vec![0.6; 144]).unwrap();
    let rows = lift_rows(&lift, &store, &img);
    for i in 1..7 {
        for c in 0..5 {
            assert!((rows.data()[i * 5 + c] - rows.data()[c]).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_image_lifts_to_relu_of_bias() {
    let s = so2_samples(3, 4);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lift = ImageLift::new(&s, 8, 8, 1, 6, 3, Resample::Bilinear, &mut store, &mut rng).unwrap();
    let rows = lift_rows(&lift, &store, &Image::zeros(8, 8, 1));
    let bias = store.get(lift.bias).data().to_vec();
    for i in 0..3 {
        for c in 0..6 {
            assert!((rows.data()[i * 6 + c] - bias[c].max(0.0)).abs() < 1e-15);
        }
    }
}

#[test]
fn exact_c4_lift_permutes_rows_under_rotation() {
    let c4 = AlgebraSampleSet::c4_grid();
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lift = ImageLift::new(&c4, 10, 10, 1, 4, 3, Resample::ExactC4, &mut store, &mut rng).unwrap();
    let img = glyph(10, 8);
    let base = lift_rows(&lift, &store, &img);
    let turned = lift_rows(&lift, &store, &rotate_quarter_turns(&img, 1).unwrap());
    // Row i of the rotated lift is row i−1 of the original.
    for i in 0..4 {
        let src = (i + 3) % 4;
        for c in 0..4 {
            let d = turned.data()[i * 4 + c] - base.data()[src * 4 + c];
            assert!(d.abs() < 1e-10, "{d}");
        }
    }
}

#[test]
fn exact_c4_lift_rejects_off_grid_samples() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = ImageLift::new(&so2_samples(4, 1), 8, 8, 1, 2, 3, Resample::ExactC4, &mut store, &mut rng);
    assert!(matches!(r, Err(ModelError::Config(_))));
}

#[test]
fn time_lift_rows() {
    let grp = GroupId::SE2.descriptor();
    let s = AlgebraSampleSet::from_coeffs(
        grp,
        grp.default_bounds(),
        vec![vec![0.1, 0.2, 0.3], vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 0.0]],
    )
    .unwrap();
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lift = TimeLift::new(&s, 6, 0.05, &mut store, &mut rng).unwrap();
    let rows = |store: &ParamStore, t: f64| {
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let y = lift.forward(&mut g, &p, &[t]).unwrap();
        g.value(y).data().to_vec()
    };
    let r = rows(&store, 1.3);
    assert_eq!(r[0..6], r[6..12]);
    assert_ne!(r[0..6], r[12..18]);

    let mut zeroed = store.clone();
    zeroed.get_mut(lift.weight).fill(0.0);
    let r0 = rows(&zeroed, 0.0);
    let bias = store.get(lift.bias).data();
    for i in 0..3 {
        for c in 0..6 {
            assert_eq!(r0[i * 6 + c], bias[c].max(0.0));
        }
    }
}

#[test]
fn pooling() {
    let mut g = Graph::new();
    let one = g.constant(Tensor::matrix(1, 3, vec![1.0, -2.0, 3.0]).unwrap());
    for mode in [PoolMode::Mean, PoolMode::Max] {
        let y = pool_invariant(&mut g, one, mode).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 3.0]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = Tensor::uniform(&[5, 3], 1.0, &mut rng);
    let mut rows: Vec<&[f64]> = v.data().chunks(3).collect();
    rows.rotate_left(2);
    let perm = Tensor::matrix(5, 3, rows.concat()).unwrap();
    let (a, b) = (g.constant(v), g.constant(perm));
    let ma = pool_invariant(&mut g, a, PoolMode::Mean).unwrap();
    let mb = pool_invariant(&mut g, b, PoolMode::Mean).unwrap();
    assert!(g.value(ma).max_abs_diff(g.value(mb)) < 1e-15);
    let xa = pool_invariant(&mut g, a, PoolMode::Max).unwrap();
    for (mx, mn) in g.value(xa).data().iter().zip(g.value(ma).data()) {
        assert!(mx > mn);
    }
}

fn time_arch() -> ArchitectureConfig {
    ArchitectureConfig {
        group: GroupId::SO2,
        lift: LiftConfig::Time { time_scale: 0.05 },
        head: HeadConfig::Regress,
        samples: SampleConfig::Uniform {
            count: 6,
            bounds: None,
        },
        hidden_channels: 16,
        n_hidden_layers: 1,
        kernel_hidden: 32,
        kernel_bound: 1.0,
        activation: Activation::Sigmoid,
        strict_mode: false,
        pool: PoolMode::Mean,
        seed: 0,
    }
}

fn c4_image_arch() -> ArchitectureConfig {
    ArchitectureConfig {
        group: GroupId::SO2,
        lift: LiftConfig::Image {
            height: 12,
            width: 12,
            in_channels: 1,
            kernel_size: 3,
            resample: Resample::ExactC4,
        },
        head: HeadConfig::Classify { classes: 4 },
        samples: SampleConfig::C4Grid,
        hidden_channels: 6,
        n_hidden_layers: 2,
        kernel_hidden: 8,
        kernel_bound: 1.0,
        activation: Activation::Sigmoid,
        strict_mode: true,
        pool: PoolMode::Mean,
        seed: 11,
    }
}

#[test]
fn parameter_count_matches_hand_count() {
    // lift 16·2 + 16 = 48
    // layer 4·2 + 4·32 + 32 + 32·256 + 256 + 1 = 8617
    // head 16·2 + 2 = 34
    let model = build_model(&time_arch()).unwrap();
    assert_eq!(model.param_count(), 48 + 8617 + 34);
    assert_eq!(time_arch().param_count(), model.param_count());

    let arch = c4_image_arch();
    assert_eq!(build_model(&arch).unwrap().param_count(), arch.param_count());
    let mut se2 = time_arch();
    se2.group = GroupId::SE2;
    se2.n_hidden_layers = 3;
    assert_eq!(build_model(&se2).unwrap().param_count(), se2.param_count());
}

#[test]
fn invalid_architectures_are_rejected() {
    let mut a = time_arch();
    a.n_hidden_layers = 0;
    assert!(matches!(build_model(&a), Err(ModelError::Config(_))));
    let mut a = time_arch();
    a.hidden_channels = 0;
    assert!(matches!(build_model(&a), Err(ModelError::Config(_))));
    let mut a = time_arch();
    a.group = GroupId::T2;
    a.samples = SampleConfig::C4Grid;
    assert!(matches!(build_model(&a), Err(ModelError::Config(_))));
}

#[test]
fn strict_flag_reaches_every_layer() {
    let mut a = time_arch();
    a.n_hidden_layers = 3;
    a.strict_mode = true;
    let m = build_model(&a).unwrap();
    assert!(layer_modes(&m).iter().all(|&x| x == MapMode::Strict));
    a.strict_mode = false;
    let m = build_model(&a).unwrap();
    assert!(layer_modes(&m).iter().all(|&x| x == MapMode::Normal));
}

#[test]
fn strict_c4_logits_are_rotation_invariant() {
    let model = build_model(&c4_image_arch()).unwrap();
    let img = glyph(12, 21);
    let mut batch = vec![img.clone()];
    for k in 1..4 {
        batch.push(rotate_quarter_turns(&img, k).unwrap());
    }
    let out = model.predict(ModelInput::Images(&batch)).unwrap();
    for row in &out[1..] {
        for (a, b) in row.iter().zip(&out[0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn identical_configs_build_identical_models() {
    assert_eq!(build_model(&time_arch()).unwrap(), build_model(&time_arch()).unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let mut model = build_model(&c4_image_arch()).unwrap();
    model.params.tensors_mut()[0].fill(0.25);
    let mut buf = Vec::new();
    write_checkpoint(&model, &mut buf).unwrap();
    assert_eq!(&buf[..5], b"LACV1");
    assert_eq!(buf[5], 0);
    let back = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back.params.flatten(), model.params.flatten());
    assert_eq!(back.arch, model.arch);

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_checkpoint(bad.as_slice()), Err(ModelError::Format(_))));
    buf.truncate(buf.len() - 3);
    assert!(matches!(read_checkpoint(buf.as_slice()), Err(ModelError::Format(_))));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let mut v = serde_json::to_value(time_arch()).unwrap();
    v["surprise"] = serde_json::json!(1);
    assert!(serde_json::from_value::<ArchitectureConfig>(v).is_err());
}

#[test]
fn pretraining_reaches_exp_on_translations() {
    let grp = GroupId::T2.descriptor();
    let bounds = vec![Interval::new(0.0, 1.0); 2];
    let s = sample_algebra(grp, &bounds, 6, 2).unwrap();
    let cfg = LayerConfig {
        group: grp,
        c_in: 1,
        c_out: 1,
        kernel_hidden: 4,
        kernel_bound: 1.0,
        activation: Activation::Relu,
        strict_mode: false,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layer = LieConvLayer::new(&cfg, s.clone(), s, &mut store, "l", &mut rng).unwrap();
    let rep = pretrain_mapping(&layer, &mut store, PRETRAIN_STEPS, PRETRAIN_LR, PRETRAIN_TARGET).unwrap();
    assert!(rep.final_mse < PRETRAIN_TARGET, "{rep:?}");
    assert!(rep.final_mse < rep.initial_mse);
}

#[test]
fn batched_forward_matches_single_rows() {
    let model = build_model(&time_arch()).unwrap();
    let ts = [0.5, 3.0, 17.25];
    let batch = model.predict(ModelInput::Times(&ts)).unwrap();
    for (i, t) in ts.iter().enumerate() {
        let one = model.predict(ModelInput::Times(&[*t])).unwrap();
        for (a, b) in one[0].iter().zip(&batch[i]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
