//! Paired synthetic gathers: hyperbolic primaries and slower multiples,
//! NMO-corrected with a perturbed velocity model.

mod events;
mod wavelet;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gather::{Gather, GatherGeometry};
use crate::io::DatasetWriter;

pub use events::{
    corrected_time, far_offset_rmo, nmo_correct, synth_prestack, EventKind, EventSpec, Synthesized,
    VelocityModel,
};
pub use wavelet::{make_wavelet, WaveletSpec};

use events::{nmo_map, synth_into, ZonedWavelet};

/// Amplitudes are stored as integer multiples of this step, which keeps
/// `x = y + m` exact in single precision.
const FIXED_POINT: f64 = (1u64 << 22) as f64;

/// Ranges the generator samples from, uniformly. `(lo, hi)` pairs are
/// inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSpace {
    pub n_primaries: (usize, usize),
    pub n_multiples: (usize, usize),
    /// Zero-offset times as fractions of the record length.
    pub t0_fraction: (f64, f64),
    /// Absolute amplitude; the sign is drawn separately.
    pub primary_amplitude: (f64, f64),
    pub multiple_amplitude: (f64, f64),
    /// True velocity model `v0 + gradient * t0`.
    pub velocity_v0: (f64, f64),
    pub velocity_gradient: (f64, f64),
    /// Relative error of the NMO velocity model.
    pub nmo_perturbation: (f64, f64),
    /// Multiple velocity is `v_nmo(t0) * (1 - slowdown)`.
    pub multiple_slowdown: (f64, f64),
    /// Largest residual move-out tolerated for a primary, in samples.
    pub primary_rmo_cap: f64,
    /// Smallest far-offset residual move-out of a multiple, in samples.
    pub q_min: f64,
    pub negative_polarity_probability: f64,
    pub phase: (f64, f64),
    pub f_center: (f64, f64),
    pub bandwidth: (f64, f64),
    pub f_decay: (f64, f64),
    pub stretch_limit: f64,
    /// Resampling attempts per event and per gather.
    pub max_retries: usize,
}

impl Default for ParamSpace {
    fn default() -> Self {
        ParamSpace {
            n_primaries: (3, 8),
            n_multiples: (2, 6),
            t0_fraction: (0.1, 0.95),
            primary_amplitude: (0.2, 1.0),
            multiple_amplitude: (0.2, 1.0),
            velocity_v0: (4000.0, 5000.0),
            velocity_gradient: (1000.0, 2000.0),
            nmo_perturbation: (-0.01, 0.01),
            multiple_slowdown: (0.05, 0.25),
            primary_rmo_cap: 2.0,
            q_min: 3.0,
            negative_polarity_probability: 0.5,
            phase: (-45.0, 45.0),
            f_center: (15.0, 40.0),
            bandwidth: (10.0, 30.0),
            f_decay: (0.0, 0.3),
            stretch_limit: 1.5,
            max_retries: 1000,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("{name}: empty range ({lo}, {hi})")));
    }
    Ok(())
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

impl ParamSpace {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self, geometry: &GatherGeometry) -> Result<()> {
        geometry.validate()?;
        for (name, r) in [
            ("t0_fraction", self.t0_fraction),
            ("primary_amplitude", self.primary_amplitude),
            ("multiple_amplitude", self.multiple_amplitude),
            ("velocity_v0", self.velocity_v0),
            ("velocity_gradient", self.velocity_gradient),
            ("nmo_perturbation", self.nmo_perturbation),
            ("multiple_slowdown", self.multiple_slowdown),
            ("phase", self.phase),
            ("f_center", self.f_center),
            ("bandwidth", self.bandwidth),
            ("f_decay", self.f_decay),
        ] {
            check_range(name, r)?;
        }
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_primaries.0 > self.n_primaries.1 || self.n_multiples.0 > self.n_multiples.1 {
            return bad("event count ranges must have lo <= hi".into());
        }
        if self.t0_fraction.0 <= 0.0 || self.t0_fraction.1 > 1.0 {
            return bad("t0_fraction must lie in (0, 1]".into());
        }
        if self.primary_amplitude.0 <= 0.0 || self.multiple_amplitude.0 <= 0.0 {
            return bad("amplitudes must be positive".into());
        }
        if self.velocity_v0.0 <= 0.0 || self.velocity_gradient.0 < 0.0 {
            return bad("velocities must be positive and non-decreasing".into());
        }
        if self.nmo_perturbation.0 <= -1.0 {
            return bad("nmo_perturbation must exceed -1".into());
        }
        if self.multiple_slowdown.0 <= 0.0 || self.multiple_slowdown.1 >= 1.0 {
            return bad("multiple_slowdown must lie in (0, 1)".into());
        }
        if self.q_min < 1.0 {
            return bad(format!("q_min must be at least one sample, got {}", self.q_min));
        }
        if !(self.primary_rmo_cap >= 0.0 && self.primary_rmo_cap < self.q_min) {
            return bad("primary_rmo_cap must lie in [0, q_min)".into());
        }
        if !(0.0..=1.0).contains(&self.negative_polarity_probability) {
            return bad("negative_polarity_probability must lie in [0, 1]".into());
        }
        if !(self.stretch_limit > 1.0) {
            return bad("stretch_limit must exceed 1".into());
        }
        if self.max_retries == 0 {
            return bad("max_retries must be positive".into());
        }
        let lowest = WaveletSpec {
            polarity: 1.0,
            phase: 0.0,
            f_center: self.f_center.0,
            bandwidth: self.bandwidth.0,
            f_decay: self.f_decay.0,
        };
        let highest = WaveletSpec {
            f_center: self.f_center.1,
            bandwidth: self.bandwidth.1,
            f_decay: self.f_decay.1,
            ..lowest
        };
        lowest.validate(geometry.dt, geometry.record_length())?;
        highest.validate(geometry.dt, geometry.record_length())?;
        Ok(())
    }

    fn sample_wavelet(&self, rng: &mut impl Rng) -> WaveletSpec {
        WaveletSpec {
            polarity: if rng.gen_bool(self.negative_polarity_probability) {
                -1.0
            } else {
                1.0
            },
            phase: uniform(rng, self.phase),
            f_center: uniform(rng, self.f_center),
            bandwidth: uniform(rng, self.bandwidth),
            f_decay: uniform(rng, self.f_decay),
        }
    }
}

/// One event as sampled, with its measured far-offset residual move-out
/// (samples) after NMO.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledEvent {
    pub spec: EventSpec,
    pub far_rmo: Option<f64>,
}

/// How a pair was generated. Not stored in dataset files.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInfo {
    pub events: Vec<SampledEvent>,
    pub true_velocity: VelocityModel,
    pub nmo_velocity: VelocityModel,
    pub wavelet: WaveletSpec,
    /// Factor applied to the raw synthesis to reach unit peak amplitude.
    pub scale: f64,
}

/// `x` = primaries + multiples, `y` = primaries, `m` = multiples, with
/// `x == y + m` holding exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct GatherPair {
    pub x: Gather,
    pub y: Gather,
    pub m: Gather,
    pub info: Option<PairInfo>,
}

/// Order-independent seed of pair `index`.
pub fn pair_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(index))
}

/// Draws events until `accept` holds, up to `retries` times.
fn sample_event(
    rng: &mut impl Rng,
    retries: usize,
    what: &str,
    mut draw: impl FnMut(&mut dyn rand::RngCore) -> (EventSpec, Option<f64>),
    accept: impl Fn(Option<f64>) -> bool,
) -> Result<SampledEvent> {
    for _ in 0..retries {
        let (spec, far_rmo) = draw(rng);
        if accept(far_rmo) {
            return Ok(SampledEvent { spec, far_rmo });
        }
    }
    Err(Error::Unsatisfiable(format!(
        "no acceptable {what} after {retries} draws"
    )))
}

/// A multiple crosses a primary when it starts above it at zero offset
/// and ends below it at the multiple's farthest live trace.
fn crosses(
    multiple: &EventSpec,
    primary: &EventSpec,
    model: &VelocityModel,
    geometry: &GatherGeometry,
    stretch_limit: f64,
) -> bool {
    if multiple.t0 >= primary.t0 {
        return false;
    }
    let record = geometry.record_length();
    geometry.offsets.iter().rev().any(|&x| {
        match (
            corrected_time(multiple, model, x, record, stretch_limit),
            corrected_time(primary, model, x, record, f64::INFINITY),
        ) {
            (Some(tm), Some(tp)) => tm > tp,
            _ => false,
        }
    })
}

fn sample_events(
    space: &ParamSpace,
    geometry: &GatherGeometry,
    rng: &mut ChaCha8Rng,
    true_model: &VelocityModel,
    nmo_model: &VelocityModel,
) -> Result<Vec<SampledEvent>> {
    let record = geometry.record_length();
    let n_p = rng.gen_range(space.n_primaries.0..=space.n_primaries.1);
    let n_m = rng.gen_range(space.n_multiples.0..=space.n_multiples.1);
    let mut events = Vec::with_capacity(n_p + n_m);
    let t0_range = (space.t0_fraction.0 * record, space.t0_fraction.1 * record);
    for _ in 0..n_p {
        let ev = sample_event(
            rng,
            space.max_retries,
            "primary",
            |rng| {
                let t0 = rng.gen_range(t0_range.0..=t0_range.1);
                let sign = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
                let spec = EventSpec {
                    kind: EventKind::Primary,
                    t0,
                    amplitude: sign * uniform_dyn(rng, space.primary_amplitude),
                    velocity: true_model.at(t0),
                };
                (spec, far_offset_rmo(&spec, nmo_model, geometry, space.stretch_limit))
            },
            |rmo| rmo.map_or(true, |r| r.abs() <= space.primary_rmo_cap),
        )?;
        events.push(ev);
    }
    for _ in 0..n_m {
        let ev = sample_event(
            rng,
            space.max_retries,
            "multiple",
            |rng| {
                let t0 = rng.gen_range(t0_range.0..=t0_range.1);
                let sign = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
                let slowdown = uniform_dyn(rng, space.multiple_slowdown);
                let spec = EventSpec {
                    kind: EventKind::Multiple,
                    t0,
                    amplitude: sign * uniform_dyn(rng, space.multiple_amplitude),
                    velocity: nmo_model.at(t0) * (1.0 - slowdown),
                };
                (spec, far_offset_rmo(&spec, nmo_model, geometry, space.stretch_limit))
            },
            |rmo| rmo.is_some_and(|r| r >= space.q_min),
        )?;
        events.push(ev);
    }
    Ok(events)
}

fn uniform_dyn(rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Rounds `y` and `m` to the fixed-point grid after scaling the sum to
/// unit peak. Returns `None` if an amplitude would lose exactness.
fn quantize(y: &[f64], m: &[f64]) -> Option<(Vec<i64>, Vec<i64>, f64)> {
    let peak = y
        .iter()
        .zip(m)
        .fold(0.0f64, |p, (a, b)| p.max((a + b).abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let q = |v: f64| (v * scale * FIXED_POINT).round() as i64;
    let mut yq: Vec<i64> = y.iter().map(|&v| q(v)).collect();
    let mut mq: Vec<i64> = m.iter().map(|&v| q(v)).collect();
    let limit = FIXED_POINT as i64;
    let argmax = (0..y.len()).max_by(|&a, &b| {
        (y[a] + m[a]).abs().total_cmp(&(y[b] + m[b]).abs())
    })?;
    for i in 0..y.len() {
        let x = yq[i] + mq[i];
        let target = if i == argmax && peak > 0.0 {
            limit * (y[i] + m[i]).signum() as i64
        } else {
            x.clamp(-limit, limit)
        };
        if target != x {
            // absorb the rounding in whichever component is present
            if m[i] != 0.0 {
                mq[i] += target - x;
            } else {
                yq[i] += target - x;
            }
        }
    }
    let exact = 1i64 << 24;
    if yq.iter().chain(&mq).any(|v| v.abs() > exact) {
        return None;
    }
    Some((yq, mq, scale))
}

/// One multiple-infested / multiple-free pair, a pure function of
/// `(space, geometry, seed)`.
pub fn make_pair(space: &ParamSpace, geometry: &GatherGeometry, seed: u64) -> Result<GatherPair> {
    space.validate(geometry)?;
    let record = geometry.record_length();
    if space.q_min * geometry.dt >= record {
        return Err(Error::Unsatisfiable(format!(
            "q_min of {} samples exceeds the record",
            space.q_min
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..space.max_retries {
        let wavelet = space.sample_wavelet(&mut rng);
        let true_model = VelocityModel {
            v0: uniform(&mut rng, space.velocity_v0),
            gradient: uniform(&mut rng, space.velocity_gradient),
        };
        let nmo_model = true_model.scaled(1.0 + uniform(&mut rng, space.nmo_perturbation));
        let events = sample_events(space, geometry, &mut rng, &true_model, &nmo_model)?;
        let (primaries, multiples): (Vec<EventSpec>, Vec<EventSpec>) = {
            let p = events.iter().filter(|e| e.spec.kind == EventKind::Primary);
            let m = events.iter().filter(|e| e.spec.kind == EventKind::Multiple);
            (p.map(|e| e.spec).collect(), m.map(|e| e.spec).collect())
        };
        if !primaries.is_empty()
            && !multiples.is_empty()
            && !multiples.iter().any(|m| {
                primaries
                    .iter()
                    .any(|p| crosses(m, p, &nmo_model, geometry, space.stretch_limit))
            })
        {
            continue;
        }
        let zoned = ZonedWavelet::new(&wavelet, geometry.dt, record)?;
        let max_time = events
            .iter()
            .map(|e| e.spec.time_at(geometry.max_offset()))
            .fold(record, f64::max);
        let n_in = (max_time / geometry.dt).ceil() as usize + wavelet.half_length(geometry.dt) + 2;
        let render = |evs: &[EventSpec]| {
            let mut raw = vec![0.0; n_in * geometry.n_traces];
            synth_into(&mut raw, evs, &zoned, &geometry.offsets, n_in, geometry.dt);
            nmo_map(
                &raw,
                n_in,
                geometry.n_samples,
                &geometry.offsets,
                geometry.dt,
                &nmo_model,
                space.stretch_limit,
            )
        };
        let y_raw = render(&primaries);
        let m_raw = render(&multiples);
        let Some((yq, mq, scale)) = quantize(&y_raw, &m_raw) else {
            continue;
        };
        let to_f32 = |v: &[i64]| -> Vec<f32> { v.iter().map(|&k| (k as f64 / FIXED_POINT) as f32).collect() };
        let xq: Vec<i64> = yq.iter().zip(&mq).map(|(a, b)| a + b).collect();
        return Ok(GatherPair {
            x: Gather::new(geometry.clone(), to_f32(&xq))?,
            y: Gather::new(geometry.clone(), to_f32(&yq))?,
            m: Gather::new(geometry.clone(), to_f32(&mq))?,
            info: Some(PairInfo {
                events,
                true_velocity: true_model,
                nmo_velocity: nmo_model,
                wavelet,
                scale,
            }),
        });
    }
    Err(Error::Unsatisfiable(format!(
        "no gather with a crossing multiple after {} attempts",
        space.max_retries
    )))
}

/// Pairs `start..start + count`, generated on up to `threads` threads.
/// The result does not depend on `threads`.
pub fn make_pairs(
    space: &ParamSpace,
    geometry: &GatherGeometry,
    start: usize,
    count: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<GatherPair>> {
    let threads = threads.clamp(1, count.max(1));
    let gen = |i: usize| make_pair(space, geometry, pair_seed(seed, i as u64));
    if threads == 1 {
        return (start..start + count).map(gen).collect();
    }
    let chunk = count.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let lo = start + t * chunk;
                let hi = (lo + chunk).min(start + count);
                s.spawn(move || (lo..hi).map(gen).collect::<Result<Vec<_>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        for h in handles {
            out.extend(h.join().expect("generator thread panicked")?);
        }
        Ok(out)
    })
}

/// Generates `n` pairs into a dataset file, streaming in chunks.
pub fn make_dataset(
    space: &ParamSpace,
    geometry: &GatherGeometry,
    n: usize,
    seed: u64,
    path: impl AsRef<Path>,
    threads: usize,
) -> Result<()> {
    space.validate(geometry)?;
    let mut writer = DatasetWriter::create(path, geometry, n)?;
    let chunk = 64 * threads.max(1);
    let mut start = 0;
    while start < n {
        let count = chunk.min(n - start);
        for pair in make_pairs(space, geometry, start, count, seed, threads)? {
            writer.push(&pair)?;
        }
        start += count;
        log::debug!("generated {start}/{n} pairs");
    }
    writer.finish()
}
