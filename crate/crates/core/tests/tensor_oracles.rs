use demultiple::tensor::{grad_check, ops, Graph, Padding, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Six nested loops, straight from the definition of cross-correlation
/// with symmetric-ish zero padding `pad` before each axis.
fn conv_reference(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    bias: &[f64],
    stride: (usize, usize),
    pad: (usize, usize),
    out_hw: (usize, usize),
) -> Vec<f64> {
    let [n, cin, h, w] = x.dims4("ref").unwrap();
    let [cout, _, kh, kw] = k.dims4("ref").unwrap();
    let (oh, ow) = out_hw;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride.0 + ky) as isize - pad.0 as isize;
                                let ix = (ox * stride.1 + kx) as isize - pad.1 as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[((b * cin + ci) * h + iy as usize) * w + ix as usize];
                                let kv = k.data()[((co * cin + ci) * kh + ky) * kw + kx];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_loop_reference() {
    let x = random(&[1, 2, 5, 5], 1);
    let k = random(&[3, 2, 3, 3], 2);
    let bias = random(&[3], 3);
    let y = ops::conv2d(&x, &k, Some(&bias), (1, 1), Padding::Same).unwrap();
    let expected = conv_reference(&x, &k, bias.data(), (1, 1), (1, 1), (5, 5));
    for (a, b) in y.data().iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }

    // strided and valid variants against the same oracle
    let x = random(&[2, 2, 7, 6], 4);
    let y = ops::conv2d(&x, &k, Some(&bias), (2, 2), Padding::Same).unwrap();
    assert_eq!(y.shape(), &[2, 3, 4, 3]);
    let expected = conv_reference(&x, &k, bias.data(), (2, 2), (1, 0), (4, 3));
    for (a, b) in y.data().iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
    let y = ops::conv2d(&x, &k, Some(&bias), (2, 1), Padding::Valid).unwrap();
    let expected = conv_reference(&x, &k, bias.data(), (2, 1), (0, 0), (3, 4));
    for (a, b) in y.data().iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn transposed_conv_is_adjoint_of_conv() {
    for (seed, stride, kdim) in [(10u64, (2, 2), (3, 3)), (11, (1, 2), (3, 5)), (12, (4, 2), (5, 3))] {
        let k = random(&[3, 2, kdim.0, kdim.1], seed);
        let big = random(&[2, 2, 8, 12], seed + 100);
        let conv_out = ops::conv2d(&big, &k, None, stride, Padding::Same).unwrap();
        let small = random(conv_out.shape(), seed + 200);
        // forward(conv2d_transposed) == backward-input of the matching conv2d
        let lhs = conv_out.dot(&small);
        let adj = ops::conv2d_transposed(&small, &k, stride).unwrap();
        assert_eq!(adj.shape(), big.shape());
        let rhs = big.dot(&adj);
        assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(1.0), "{lhs} vs {rhs}");

        let mut g = Graph::new();
        let xv = g.param(big.clone());
        let kv = g.constant(k.clone());
        let y = g.conv2d(xv, kv, None, stride, Padding::Same).unwrap();
        let w = g.constant(small.clone());
        let prod = g.mul(y, w).unwrap();
        let loss = g.sum(prod).unwrap();
        g.backward(loss).unwrap();
        for (a, b) in g.grad(xv).unwrap().iter().zip(adj.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn maxpool_matches_window_oracle() {
    let x = random(&[1, 1, 8, 8], 7);
    let y = ops::maxpool2d(&x, (2, 4)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 2]);
    for oy in 0..4 {
        for ox in 0..2 {
            let mut best = f64::NEG_INFINITY;
            for dy in 0..2 {
                for dx in 0..4 {
                    best = best.max(x.data()[(oy * 2 + dy) * 8 + ox * 4 + dx]);
                }
            }
            assert_eq!(y.data()[oy * 2 + ox], best);
        }
    }
}

#[test]
fn maxpool_gradient_goes_to_first_maximum() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(vec![1, 1, 2, 2], vec![3.0, 1.0, 3.0, 3.0]).unwrap());
    let y = g.maxpool2d(x, (2, 2)).unwrap();
    let loss = g.sum(y).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn pool_then_upsample_restores_shape() {
    let x = random(&[1, 3, 16, 8], 5);
    for factor in [(1, 1), (2, 1), (2, 2), (4, 2)] {
        let pooled = ops::maxpool2d(&x, factor).unwrap();
        let up = ops::bilinear_upsample(&pooled, factor).unwrap();
        assert_eq!(up.shape(), x.shape());
    }
}

#[test]
fn gradients_match_finite_differences() {
    let cases: Vec<(&str, Vec<Vec<usize>>, f64)> = vec![
        ("conv2d", vec![vec![1, 2, 6, 6], vec![3, 2, 3, 3], vec![3]], 1e-4),
        ("conv2d_strided", vec![vec![1, 2, 6, 6], vec![2, 2, 3, 3], vec![2]], 1e-4),
        ("conv2d_transposed", vec![vec![1, 2, 3, 3], vec![2, 3, 2, 2]], 1e-4),
        ("maxpool2d", vec![vec![1, 2, 6, 6]], 1e-6),
        ("bilinear_upsample", vec![vec![1, 2, 3, 4]], 1e-4),
    ];
    for (name, shapes, tol) in cases {
        let err = grad_check(
            |g, v| match name {
                "conv2d" => g.conv2d(v[0], v[1], Some(v[2]), (1, 1), Padding::Same),
                "conv2d_strided" => g.conv2d(v[0], v[1], Some(v[2]), (2, 2), Padding::Same),
                "conv2d_transposed" => g.conv2d_transposed(v[0], v[1], (2, 2)),
                "maxpool2d" => g.maxpool2d(v[0], (2, 3)),
                _ => g.bilinear_upsample(v[0], (2, 3)),
            },
            &shapes,
            42,
        )
        .unwrap();
        assert!(err < tol, "{name}: relative error {err}");
    }
}

#[test]
fn forward_and_backward_are_bit_deterministic() {
    let run = || {
        let mut g = Graph::<f32>::new();
        let x = g.constant(random(&[2, 2, 8, 8], 9).cast());
        let k = g.param(random(&[4, 2, 3, 3], 10).cast());
        let b = g.param(random(&[4], 11).cast());
        let y = g.conv2d(x, k, Some(b), (1, 1), Padding::Same).unwrap();
        let y = g.relu(y).unwrap();
        let y = g.maxpool2d(y, (2, 2)).unwrap();
        let y = g.bilinear_upsample(y, (2, 2)).unwrap();
        let t = g.constant(random(&[2, 4, 8, 8], 12).cast());
        let loss = g.mse_loss(y, t).unwrap();
        g.backward(loss).unwrap();
        (
            g.value(loss).data()[0].to_bits(),
            g.grad(k).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_adjoint_identity_random(
        seed in 0u64..10_000,
        sh in 1usize..4,
        sw in 1usize..4,
        kh in prop::sample::select(vec![1usize, 3, 5]),
        kw in prop::sample::select(vec![1usize, 3]),
    ) {
        let x = random(&[1, 2, 9, 7], seed);
        let k = random(&[2, 2, kh, kw], seed + 1);
        let y = ops::conv2d(&x, &k, None, (sh, sw), Padding::Same).unwrap();
        let r = random(y.shape(), seed + 2);
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let kv = g.constant(k);
        let yv = g.conv2d(xv, kv, None, (sh, sw), Padding::Same).unwrap();
        let rv = g.constant(r.clone());
        let p = g.mul(yv, rv).unwrap();
        let loss = g.sum(p).unwrap();
        g.backward(loss).unwrap();
        let back = Tensor::new(x.shape().to_vec(), g.grad(xv).unwrap().to_vec()).unwrap();
        let lhs = y.dot(&r);
        let rhs = x.dot(&back);
        prop_assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(1e-3));
    }
}
