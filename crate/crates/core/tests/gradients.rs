use laconv::diffgraph::gradcheck::{check_op, OPS};
use laconv::diffgraph::Tensor;
use laconv::gconv::{check_layer_gradients, Activation, LayerConfig, LieConvLayer, ParamStore};
use laconv::lie::{sample_algebra, GroupId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const INSTANCES: u64 = 20;

#[test]
fn every_op_passes_20_instances() {
    for op in OPS {
        for seed in 0..INSTANCES {
            let r = check_op(op, seed, H).unwrap();
            assert!(r.max_rel_err < 1e-4, "{op} seed {seed}: {} at {:?}", r.max_rel_err, r.worst);
        }
    }
}

#[test]
fn unknown_op_is_rejected() {
    assert!(check_op("conv3d", 0, H).is_err());
}

fn layer_case(seed: u64) -> (LieConvLayer, ParamStore, Tensor) {
    let id = GroupId::ALL[(seed % 3) as usize];
    let d = id.descriptor();
    let n = 2 + (seed % 3) as usize;
    let s = sample_algebra(d, &d.default_bounds(), n, seed).unwrap();
    let cfg = LayerConfig {
        group: d,
        c_in: 2,
        c_out: 3,
        kernel_hidden: 5,
        kernel_bound: 1.0,
        activation: Activation::Sigmoid,
        strict_mode: seed % 4 == 3,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let layer = LieConvLayer::new(&cfg, s.clone(), s, &mut store, "l", &mut rng).unwrap();
    let f = Tensor::uniform(&[n, 2], 1.0, &mut rng);
    (layer, store, f)
}

#[test]
fn lie_conv_forward_passes_20_instances() {
    for seed in 0..INSTANCES {
        let (layer, store, f) = layer_case(seed);
        let r = check_layer_gradients(&layer, &store, &f, H).unwrap();
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {}", r.max_rel_err);
    }
}
