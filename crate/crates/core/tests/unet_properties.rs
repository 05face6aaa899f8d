use demultiple::tensor::Tensor;
use demultiple::unet::{self, DownMode, ForwardOptions, KernelCase, Model, UNetConfig, UpMode};
use demultiple::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One gather of 64 traces by 256 samples, time on the height axis.
const H: usize = 256;
const W: usize = 64;

fn random_input(seed: u64, h: usize, w: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(vec![1, 1, h, w], |_| rng.gen_range(-1.0..1.0))
}

fn narrow(blocks: usize, case: KernelCase, down: DownMode, up: UpMode) -> UNetConfig {
    let mut cfg = UNetConfig::with_blocks(blocks).with_case(case);
    cfg.base_channels = 2;
    cfg.down_mode = down;
    cfg.up_mode = up;
    cfg
}

#[test]
fn output_shape_matches_input_for_every_variant() {
    let x = random_input(0, H, W);
    for case in KernelCase::ALL {
        for down in [DownMode::Maxpool, DownMode::StridedConv] {
            for up in [UpMode::Bilinear, UpMode::TransposedConv] {
                for blocks in [5, 9] {
                    let cfg = narrow(blocks, case, down, up);
                    let model = unet::build(&cfg, 1).unwrap();
                    let y = model.predict(&x).unwrap();
                    assert_eq!(y.shape(), x.shape(), "{case:?} {down:?} {up:?} {blocks}");
                }
            }
        }
    }
    // 13 blocks: six levels; case D would need 4^6 time samples
    for case in [KernelCase::A, KernelCase::C] {
        let model = unet::build(&narrow(13, case, DownMode::Maxpool, UpMode::Bilinear), 1).unwrap();
        assert_eq!(model.predict(&x).unwrap().shape(), x.shape());
    }
    let model = unet::build(&narrow(13, KernelCase::D, DownMode::Maxpool, UpMode::Bilinear), 1).unwrap();
    assert!(model.predict(&x).is_err());
}

#[test]
fn analytic_count_equals_enumeration_for_paper_depths() {
    for cfg in [UNetConfig::small(), UNetConfig::standard()] {
        let model = unet::build(&cfg, 3).unwrap();
        assert_eq!(model.param_count() as u64, unet::param_count(&cfg));
    }
    let small = unet::param_count(&UNetConfig::small()) as f64;
    let standard = unet::param_count(&UNetConfig::standard()) as f64;
    let big = unet::param_count(&UNetConfig::big()) as f64;
    assert!((small / 1.0e6 - 1.0).abs() <= 0.10, "{small}");
    assert!((standard / 17.2e6 - 1.0).abs() <= 0.10, "{standard}");
    assert!((big / 276.8e6 - 1.0).abs() <= 0.10, "{big}");
}

#[test]
fn same_seed_gives_identical_weights() {
    let cfg = UNetConfig::standard();
    let a = unet::build(&cfg, 11).unwrap();
    let b = unet::build(&cfg, 11).unwrap();
    let c = unet::build(&cfg, 12).unwrap();
    let bits = |m: &Model| {
        m.params
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
    for (name, t) in a.params.iter() {
        if name.ends_with(".bias") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }
}

#[test]
fn zero_input_gives_zero_output() {
    let model = unet::build(&UNetConfig::small(), 5).unwrap();
    let y = model.predict(&Tensor::zeros(vec![1, 1, H, W])).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_is_deterministic_and_capture_is_transparent() {
    let mut cfg = UNetConfig::small().with_case(KernelCase::B);
    cfg.base_channels = 4;
    let model = unet::build(&cfg, 6).unwrap();
    let x = random_input(7, H, W);
    let plain = model.predict(&x).unwrap();
    let again = model.predict(&x).unwrap();
    let opts = ForwardOptions {
        capture: true,
        ..Default::default()
    };
    let (captured, acts) = model.predict_with(&x, opts).unwrap();
    assert_eq!(plain.data(), again.data());
    assert_eq!(plain.data(), captured.data());
    let acts = acts.unwrap();
    assert_eq!(acts.len(), model.n_blocks());
    assert_eq!(acts[0].shape(), &[1, 4, H, W]);
    assert_eq!(acts[2].shape(), &[1, 16, H / 8, W / 2]);
}

#[test]
fn zeroing_skips_changes_the_output() {
    let mut cfg = UNetConfig::small();
    cfg.base_channels = 4;
    let model = unet::build(&cfg, 8).unwrap();
    let x = random_input(9, H, W);
    let with = model.predict(&x).unwrap();
    let without = model
        .predict_with(
            &x,
            ForwardOptions {
                zero_skips: true,
                ..Default::default()
            },
        )
        .unwrap()
        .0;
    let diff: f32 = with
        .data()
        .iter()
        .zip(without.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(diff > 1e-3, "{diff}");
}

#[test]
fn every_parameter_receives_gradient() {
    for (down, up) in [
        (DownMode::Maxpool, UpMode::Bilinear),
        (DownMode::StridedConv, UpMode::TransposedConv),
    ] {
        let mut cfg = narrow(5, KernelCase::A, down, up);
        cfg.base_channels = 4;
        let mut model = unet::build(&cfg, 10).unwrap();
        // positive biases keep every ReLU alive
        for i in 0..model.params.len() {
            if model.params.name(i).ends_with(".bias") {
                model.params.get_mut(i).data_mut().fill(0.1);
            }
        }
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g);
        let x = g.constant(random_input(11, 32, 16));
        let t = g.constant(random_input(12, 32, 16));
        let out = model.forward(&mut g, &bound, x, ForwardOptions::default()).unwrap();
        let loss = g.mse_loss(out.output, t).unwrap();
        g.backward(loss).unwrap();
        for (i, v) in bound.iter().enumerate() {
            let grad = g.grad(*v).unwrap();
            assert!(grad.iter().any(|&d| d != 0.0), "{}", model.params.name(i));
        }
    }
}

#[test]
fn big_model_runs_on_a_full_gather() {
    let model = unet::build(&UNetConfig::big(), 0).unwrap();
    let y = model.predict(&random_input(1, H, W)).unwrap();
    assert_eq!(y.shape(), &[1, 1, H, W]);
    assert!(y.is_finite());
}
