use mixsr::image::ImageBuffer;
use mixsr::model::layers::{Cascade, LayoutBuilder, ParamKind};
use mixsr::model::{
    count_parameters, pixel_shuffle, unet_forward, ChannelAttention, ModelConfig, ModelWeights, Network, Rcab, Tensor,
    Unit,
};
use mixsr::{Error, Rng, Weights, Weights64};

fn random_tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let mut rng = Rng::new(seed);
    Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.uniform() * 2.0 - 1.0).collect()).unwrap()
}

fn random_params(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| (rng.uniform() * 2.0 - 1.0) * scale).collect()
}

fn total_len(b: LayoutBuilder) -> usize {
    b.finish().iter().map(|s| s.slot.len).sum()
}

#[test]
fn output_shape_equals_input_shape() {
    let cfg = ModelConfig {
        base_channels: 8,
        num_cascading_blocks: 1,
        rcabs_per_block: 1,
        attention_reduction: 4,
        ..ModelConfig::default()
    };
    let w = Weights::init(cfg, &mut Rng::new(0)).unwrap();
    for size in [4, 8, 64, 128] {
        let img = ImageBuffer::from_fn(size, size, |y, x, c| ((y + 2 * x + c) % 7) as f32 / 7.0);
        assert_eq!(unet_forward(&img, &w).unwrap().dims(), (size, size));
    }
    let rect = ImageBuffer::filled(8, 12, 0.4);
    assert_eq!(unet_forward(&rect, &w).unwrap().dims(), (8, 12));
}

#[test]
fn default_config_handles_training_patch() {
    let w = Weights::init(ModelConfig::default(), &mut Rng::new(0)).unwrap();
    let img = ImageBuffer::filled(128, 128, 0.5);
    let out = unet_forward(&img, &w).unwrap();
    assert_eq!(out.dims(), (128, 128));
    assert!(out.samples().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn rejects_sizes_not_divisible_by_four() {
    let w = Weights::init(ModelConfig::tiny(), &mut Rng::new(0)).unwrap();
    let img = ImageBuffer::filled(65, 65, 0.5);
    assert!(matches!(unet_forward(&img, &w), Err(Error::NotDivisibleBy4 { .. })));
}

#[test]
fn identity_weights_reproduce_input() {
    for cfg in [ModelConfig::tiny(), ModelConfig::default()] {
        let w = Weights::identity(cfg).unwrap();
        let img = ImageBuffer::from_fn(16, 20, |y, x, c| ((y * 20 + x) * 3 + c) as f32 / 960.0);
        assert_eq!(unet_forward(&img, &w).unwrap(), img);
    }
}

#[test]
fn parameter_count_matches_inventory() {
    for cfg in [
        ModelConfig::default(),
        ModelConfig::tiny(),
        ModelConfig {
            base_channels: 24,
            attention_reduction: 8,
            ..ModelConfig::default()
        },
    ] {
        let net = Network::new(cfg).unwrap();
        let enumerated: usize = net.params().iter().map(|s| s.shape.iter().product::<usize>()).sum();
        assert_eq!(count_parameters(&cfg).unwrap(), enumerated as u64);
        assert_eq!(Weights::init(cfg, &mut Rng::new(1)).unwrap().len(), enumerated);
    }
}

#[test]
fn width_sweep_spans_millions_of_parameters() {
    let counts: Vec<u64> = [24, 32, 48, 64, 96]
        .iter()
        .map(|&c| {
            count_parameters(&ModelConfig {
                base_channels: c,
                attention_reduction: 8,
                ..ModelConfig::default()
            })
            .unwrap()
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let cfg = ModelConfig::tiny();
    let a = Weights::init(cfg, &mut Rng::new(9)).unwrap();
    let b = Weights::init(cfg, &mut Rng::new(9)).unwrap();
    assert_eq!(a.values(), b.values());
    for spec in a.network().params() {
        if spec.kind == ParamKind::Bias {
            assert!(spec.slot.of(a.values()).iter().all(|&v| v == 0.0), "{}", spec.name);
        }
    }
}

#[test]
fn he_init_standard_deviation() {
    // 3x3 kernels with 64 input channels: the default-config RCAB convs
    let w = Weights::init(ModelConfig::default(), &mut Rng::new(4)).unwrap();
    let samples: Vec<f64> = w
        .network()
        .params()
        .iter()
        .filter(|s| s.shape == vec![64, 64, 3, 3])
        .flat_map(|s| s.slot.of(w.values()).iter().map(|&v| v as f64))
        .collect();
    assert!(samples.len() >= 100_000);
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let expected = (2.0f64 / (3.0 * 3.0 * 64.0)).sqrt();
    assert!((std / expected - 1.0).abs() < 0.03, "{std} vs {expected}");
}

#[test]
fn weights_container_round_trip_and_corruption() {
    let w = Weights::init(ModelConfig::tiny(), &mut Rng::new(2)).unwrap();
    let bytes = w.to_bytes();
    let back = Weights::from_bytes(&bytes).unwrap();
    assert_eq!(back.values(), w.values());
    assert_eq!(back.config(), w.config());
    let mut corrupt = bytes.clone();
    corrupt[100] ^= 1;
    assert!(matches!(Weights::from_bytes(&corrupt), Err(Error::MalformedWeights(_))));
    assert!(Weights::from_bytes(&bytes[..50]).is_err());
}

#[test]
fn attention_scales_are_gates() {
    let mut b = LayoutBuilder::default();
    let ca = ChannelAttention::new(&mut b, "ca", 16, 4);
    let params = random_params(total_len(b), 3, 1.0);
    let x = random_tensor(16, 5, 7, 1);
    let (s, _) = ca.forward(&params, &x).unwrap();
    assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));

    // zero input with zero biases gives sigmoid(0)
    let mut zero_bias = params.clone();
    zero_bias[ca.down_b.offset..ca.down_b.offset + ca.down_b.len].fill(0.0);
    zero_bias[ca.up_b.offset..ca.up_b.offset + ca.up_b.len].fill(0.0);
    let (s, _) = ca.forward(&zero_bias, &Tensor::zeros(16, 4, 4)).unwrap();
    assert!(s.iter().all(|&v| v == 0.5));

    assert!(ca.forward(&params, &random_tensor(8, 4, 4, 0)).is_err());
}

#[test]
fn attention_ignores_spatial_permutations() {
    let mut b = LayoutBuilder::default();
    let ca = ChannelAttention::new(&mut b, "ca", 8, 2);
    let params = random_params(total_len(b), 5, 0.7);
    let x = random_tensor(8, 6, 6, 2);
    let (reference, _) = ca.forward(&params, &x).unwrap();
    let mut rng = Rng::new(17);
    for _ in 0..10 {
        let perm = rng.permutation(36);
        let mut y = x.clone();
        for c in 0..8 {
            for (dst, &src) in perm.iter().enumerate() {
                y.data[c * 36 + dst] = x.data[c * 36 + src];
            }
        }
        let (s, _) = ca.forward(&params, &y).unwrap();
        for (a, b) in s.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn rcab_with_zero_weights_is_identity() {
    let mut b = LayoutBuilder::default();
    let rcab = Rcab::new(&mut b, "r", 16, 4);
    let params = vec![0.0f64; total_len(b)];
    let x = random_tensor(16, 8, 8, 3);
    let (y, _) = rcab.forward(&params, &x).unwrap();
    assert_eq!(y, x);
}

/// Builds a one-RCAB cascade and returns it with random parameters.
fn single_rcab_cascade(c: usize) -> (Cascade<Rcab>, Vec<f64>) {
    let mut b = LayoutBuilder::default();
    let cascade = Cascade::new(&mut b, "blk", c, 1, |b, name| Rcab::new(b, name, c, 4));
    let params = random_params(total_len(b), 8, 0.3);
    (cascade, params)
}

fn set_selector(cascade: &Cascade<Rcab>, params: &mut [f64], k: usize, group: usize) {
    let f = &cascade.fusions[k];
    let c = f.cout;
    let w = f.weight.of_mut(params);
    w.fill(0.0);
    for co in 0..c {
        w[co * f.cin + group * c + co] = 1.0;
    }
    f.bias.of_mut(params).fill(0.0);
}

#[test]
fn cascade_with_selecting_fusion_equals_rcab() {
    let (cascade, mut params) = single_rcab_cascade(16);
    set_selector(&cascade, &mut params, 0, 1);
    let x = random_tensor(16, 8, 8, 4);
    let (y, _) = cascade.forward(&params, &x).unwrap();
    let (mut r, _) = cascade.units[0].forward(&params, &x).unwrap();
    r.data.iter_mut().for_each(|v| *v = v.max(0.0));
    assert_eq!(y, r);
    assert_eq!(y.shape(), (16, 8, 8));
}

#[test]
fn cascade_routing_raw_input_is_identity() {
    let c = 16;
    let mut b = LayoutBuilder::default();
    let cascade = Cascade::new(&mut b, "blk", c, 4, |b, name| Rcab::new(b, name, c, 4));
    let mut params = vec![0.0f64; total_len(b)];
    for k in 0..4 {
        set_selector(&cascade, &mut params, k, 0);
    }
    // fusion outputs are rectified, so route a non-negative input
    let mut x = random_tensor(c, 8, 8, 6);
    x.data.iter_mut().for_each(|v| *v = v.abs());
    let (y, _) = cascade.forward(&params, &x).unwrap();
    assert_eq!(y, x);
}

#[test]
fn pixel_shuffle_in_network_shapes() {
    let x = random_tensor(16, 4, 4, 0);
    assert_eq!(pixel_shuffle(&x, 2).unwrap().shape(), (4, 8, 8));
}

#[test]
fn forward_is_deterministic() {
    let w = Weights::init(ModelConfig::tiny(), &mut Rng::new(3)).unwrap();
    let img = ImageBuffer::from_fn(32, 32, |y, x, c| ((y * 7 + x * 3 + c) % 11) as f32 / 11.0);
    let a = unet_forward(&img, &w).unwrap();
    let b = unet_forward(&img, &w).unwrap();
    assert_eq!(a.samples(), b.samples());
}

#[test]
fn inference_path_matches_training_path() {
    let w = Weights64::init(ModelConfig::tiny(), &mut Rng::new(3)).unwrap();
    let x = random_tensor(3, 16, 16, 9);
    let (a, _) = w.network().forward(w.values(), &x).unwrap();
    let b = w.network().infer(w.values(), &x).unwrap();
    assert_eq!(a, b);
}

#[test]
fn f32_and_f64_agree() {
    let w64 = Weights64::init(ModelConfig::tiny(), &mut Rng::new(12)).unwrap();
    let w32: ModelWeights<f32> = w64.cast();
    let img = ImageBuffer::from_fn(16, 16, |y, x, c| ((y * 5 + x + c) % 9) as f32 / 9.0);
    let a = unet_forward(&img, &w64).unwrap();
    let b = unet_forward(&img, &w32).unwrap();
    for (p, q) in a.samples().iter().zip(b.samples()) {
        assert!((p - q).abs() < 1e-4);
    }
}
