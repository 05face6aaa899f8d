use demultiple::io::{
    ibm_to_f32, load_checkpoint, parse_segy, read_dataset, read_segy_gathers, save_checkpoint,
    write_dataset,
};
use demultiple::synthgen::{make_pairs, GatherPair, ParamSpace};
use demultiple::unet::{DownMode, KernelCase, Model, UNetConfig, UpMode};
use demultiple::{Error, Gather, GatherGeometry, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// IBM hex float encoder, rounding to nearest.
fn f32_to_ibm(v: f32) -> u32 {
    if v == 0.0 {
        return 0;
    }
    let sign = if v < 0.0 { 0x8000_0000 } else { 0 };
    let mut a = f64::from(v.abs());
    let mut exp = 64i32;
    while a >= 1.0 {
        a /= 16.0;
        exp += 1;
    }
    while a < 1.0 / 16.0 {
        a *= 16.0;
        exp -= 1;
    }
    let mut mant = (a * f64::from(1u32 << 24)).round() as u32;
    if mant >= 1 << 24 {
        mant >>= 4;
        exp += 1;
    }
    sign | ((exp as u32) << 24) | mant
}

struct Fixture {
    format: u16,
    n_samples: usize,
    interval_micros: u16,
}

/// SEG-Y bytes for `traces` (each `n_samples` long) with offsets in the
/// trace headers.
fn segy_bytes(fx: &Fixture, traces: &[Vec<f32>], offsets: &[i32]) -> Vec<u8> {
    let mut b = vec![b' '; 3200];
    let mut bin = vec![0u8; 400];
    bin[16..18].copy_from_slice(&fx.interval_micros.to_be_bytes());
    bin[20..22].copy_from_slice(&(fx.n_samples as u16).to_be_bytes());
    bin[24..26].copy_from_slice(&fx.format.to_be_bytes());
    b.extend(bin);
    for (tr, off) in traces.iter().zip(offsets) {
        let mut h = vec![0u8; 240];
        h[36..40].copy_from_slice(&off.to_be_bytes());
        h[114..116].copy_from_slice(&(tr.len() as u16).to_be_bytes());
        b.extend(h);
        for &v in tr {
            let word = if fx.format == 1 { f32_to_ibm(v) } else { v.to_bits() };
            b.extend(word.to_be_bytes());
        }
    }
    b
}

fn random_traces(seed: u64, n: usize, ns: usize) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..ns).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect()
}

#[test]
fn ibm_reference_words() {
    assert_eq!(ibm_to_f32(0x4264_0000), 100.0);
    assert_eq!(ibm_to_f32(0x0000_0000), 0.0);
    for v in [1.0f32, -118.625, 0.15625, 3.5e-3, -7.25e4] {
        let back = ibm_to_f32(f32_to_ibm(v));
        assert!(((back - v) / v).abs() < 1e-6, "{v} -> {back}");
    }
}

#[test]
fn segy_fixture_round_trips_in_both_formats() {
    let geom = GatherGeometry::default();
    let traces = random_traces(1, 2 * geom.n_traces, geom.n_samples);
    let offsets: Vec<i32> = (0..traces.len()).map(|i| ((i % 64) * 50) as i32).collect();
    for format in [1u16, 5] {
        let fx = Fixture {
            format,
            n_samples: geom.n_samples,
            interval_micros: 4000,
        };
        let (layout, gathers) = parse_segy(&segy_bytes(&fx, &traces, &offsets), 64, &geom).unwrap();
        assert_eq!(layout.format, format);
        assert_eq!(layout.n_samples, 256);
        assert_eq!(gathers.len(), 2);
        for (k, g) in gathers.iter().enumerate() {
            assert_eq!(g.geometry.dt, 0.004);
            assert_eq!(g.geometry.offsets[63], 3150.0);
            for tr in 0..64 {
                for (s, &v) in traces[k * 64 + tr].iter().enumerate() {
                    assert!((g.get(tr, s) - v).abs() <= 1e-6, "format {format}");
                }
            }
        }
    }
}

#[test]
fn segy_fit_policy_crops_time_and_drops_partial_gathers() {
    let geom = GatherGeometry::default();
    // 300 samples: centre crop removes 22 from the top
    let traces = random_traces(2, 64 + 10, 300);
    let offsets: Vec<i32> = (0..traces.len() as i32).map(|i| i * 10).collect();
    let fx = Fixture {
        format: 5,
        n_samples: 300,
        interval_micros: 2000,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("crop.sgy");
    std::fs::write(&path, segy_bytes(&fx, &traces, &offsets)).unwrap();
    let gathers = read_segy_gathers(&path, 64, &geom).unwrap();
    assert_eq!(gathers.len(), 1);
    assert_eq!(gathers[0].get(5, 0), traces[5][22]);
    assert_eq!(gathers[0].get(5, 255), traces[5][277]);

    // 32 input traces are stretched to 64 by linear interpolation
    let traces = random_traces(3, 32, 256);
    let offsets: Vec<i32> = (0..32).map(|i| i * 100).collect();
    let fx = Fixture {
        format: 5,
        n_samples: 256,
        interval_micros: 4000,
    };
    let (_, g) = parse_segy(&segy_bytes(&fx, &traces, &offsets), 32, &geom).unwrap();
    let g = &g[0];
    assert_eq!(g.get(0, 10), traces[0][10]);
    assert_eq!(g.get(63, 10), traces[31][10]);
    let p = 20.0 * 31.0 / 63.0;
    let (i, w) = (p as usize, p - (p as usize) as f64);
    let expected = traces[i][10] + (traces[i + 1][10] - traces[i][10]) * w as f32;
    assert!((g.get(20, 10) - expected).abs() < 1e-6);
}

#[test]
fn malformed_segy_gives_typed_errors() {
    let geom = GatherGeometry::default();
    let traces = random_traces(4, 4, 16);
    let offsets = [0, 10, 20, 30];
    let fx = |format| Fixture {
        format,
        n_samples: 16,
        interval_micros: 4000,
    };
    let good = segy_bytes(&fx(5), &traces, &offsets);
    assert!(parse_segy(&good, 4, &geom).is_ok());

    assert!(matches!(parse_segy(&good[..3000], 4, &geom), Err(Error::Truncated { .. })));
    assert!(matches!(parse_segy(&good[..good.len() - 3], 4, &geom), Err(Error::Truncated { .. })));
    assert!(matches!(
        parse_segy(&segy_bytes(&fx(3), &traces, &offsets), 4, &geom),
        Err(Error::SegyFormat(3))
    ));
    let mut bad_len = good.clone();
    let second = 3600 + 240 + 16 * 4;
    bad_len[second + 114..second + 116].copy_from_slice(&17u16.to_be_bytes());
    assert!(matches!(
        parse_segy(&bad_len, 4, &geom),
        Err(Error::SegyTraceLength { trace: 1, expected: 16, found: 17 })
    ));
    let mut zero = good.clone();
    zero[3220..3222].copy_from_slice(&0u16.to_be_bytes());
    assert!(matches!(parse_segy(&zero, 4, &geom), Err(Error::Malformed { .. })));

    // arbitrary bytes never panic
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut junk = good.clone();
        let len = rng.gen_range(0..junk.len());
        junk.truncate(len);
        for _ in 0..8 {
            if !junk.is_empty() {
                let at = rng.gen_range(0..junk.len());
                junk[at] = rng.gen();
            }
        }
        let _ = parse_segy(&junk, 4, &geom);
    }
}

#[test]
fn dataset_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let geom = GatherGeometry::default();
    let pairs = make_pairs(&ParamSpace::default(), &geom, 0, 3, 12, 1).unwrap();
    let a = dir.path().join("a.dmlt");
    write_dataset(&a, &geom, &pairs).unwrap();
    let ds = read_dataset(&a).unwrap();
    assert_eq!(ds.len(), 3);
    for (read, made) in ds.pairs.iter().zip(&pairs) {
        for (u, v) in [(&read.x, &made.x), (&read.y, &made.y), (&read.m, &made.m)] {
            let ub: Vec<u32> = u.data().iter().map(|f| f.to_bits()).collect();
            let vb: Vec<u32> = v.data().iter().map(|f| f.to_bits()).collect();
            assert_eq!(ub, vb);
        }
    }
    let b = dir.path().join("b.dmlt");
    write_dataset(&b, &ds.geometry, &ds.pairs).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn empty_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let geom = GatherGeometry::regular(8, 32, 0.002, 700.0);
    let path = dir.path().join("empty.dmlt");
    write_dataset(&path, &geom, &[] as &[GatherPair]).unwrap();
    let ds = read_dataset(&path).unwrap();
    assert!(ds.is_empty());
    assert_eq!(ds.geometry, geom);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = UNetConfig {
        base_channels: 4,
        down_mode: DownMode::StridedConv,
        up_mode: UpMode::TransposedConv,
        ..UNetConfig::small().with_case(KernelCase::C)
    };
    let mut model = Model::build(&cfg, 21).unwrap();
    // nonzero biases so every tensor carries information
    for i in 0..model.params.len() {
        if model.params.name(i).ends_with("bias") {
            let t = model.params.get_mut(i);
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v = j as f32 * 0.01 - 0.02;
            }
        }
    }
    let path = dir.path().join("model.dmlw");
    save_checkpoint(&path, &model, true).unwrap();
    let (loaded, transpose) = load_checkpoint(&path).unwrap();
    assert!(transpose);
    assert_eq!(loaded.config, model.config);
    assert_eq!(loaded.params.len(), model.params.len());
    for i in 0..model.params.len() {
        let a: Vec<u32> = model.params.get(i).data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = loaded.params.get(i).data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "{}", model.params.name(i));
    }
    let geom = GatherGeometry::default();
    let x = Gather::new(geom.clone(), (0..geom.len()).map(|i| (i as f32 * 0.01).sin()).collect()).unwrap();
    let batch: Tensor<f32> = x.to_tensor(true);
    assert_eq!(model.predict(&batch).unwrap().data(), loaded.predict(&batch).unwrap().data());

    let again = dir.path().join("again.dmlw");
    save_checkpoint(&again, &loaded, true).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = UNetConfig {
        base_channels: 2,
        ..UNetConfig::small()
    };
    let model = Model::build(&cfg, 1).unwrap();
    let path = dir.path().join("m.dmlw");
    save_checkpoint(&path, &model, false).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.dmlw");
    std::fs::write(&cut, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(load_checkpoint(&cut), Err(Error::Truncated { .. })));

    let magic = dir.path().join("magic.dmlw");
    let mut m = bytes.clone();
    m[0] = b'X';
    std::fs::write(&magic, m).unwrap();
    assert!(matches!(load_checkpoint(&magic), Err(Error::Magic { .. })));

    let version = dir.path().join("version.dmlw");
    let mut v = bytes;
    v[4] = 9;
    std::fs::write(&version, v).unwrap();
    assert!(matches!(load_checkpoint(&version), Err(Error::Version { found: 9, .. })));
}
