use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gather::{Gather, GatherGeometry};

use super::wavelet::{make_wavelet, WaveletSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Primary,
    Multiple,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    /// Zero-offset two-way time, seconds.
    pub t0: f64,
    pub amplitude: f64,
    /// Move-out velocity of the event, m/s.
    pub velocity: f64,
}

impl EventSpec {
    /// Hyperbolic travel time at `offset`.
    pub fn time_at(&self, offset: f64) -> f64 {
        (self.t0 * self.t0 + (offset / self.velocity).powi(2)).sqrt()
    }
}

/// `v(t0) = v0 + gradient * t0`, m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    pub v0: f64,
    pub gradient: f64,
}

impl VelocityModel {
    pub fn constant(v: f64) -> Self {
        VelocityModel { v0: v, gradient: 0.0 }
    }

    pub fn at(&self, t0: f64) -> f64 {
        self.v0 + self.gradient * t0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        VelocityModel {
            v0: self.v0 * factor,
            gradient: self.gradient * factor,
        }
    }

    /// Pre-correction time at `offset` of a sample that corrects to `tau`.
    pub fn moveout_time(&self, tau: f64, offset: f64) -> f64 {
        (tau * tau + (offset / self.at(tau)).powi(2)).sqrt()
    }
}

/// Output of [`synth_prestack`].
#[derive(Clone, Debug)]
pub struct Synthesized {
    pub gather: Gather,
    /// Indices of events that left the record on at least one trace.
    pub clipped: Vec<usize>,
}

const ZONES: usize = 4;

/// Per-zone wavelets for a time-varying source. The spectrum is held
/// fixed inside each zone and blended linearly between zone centres.
pub(crate) struct ZonedWavelet {
    centres: [f64; ZONES],
    wavelets: Vec<Vec<f64>>,
    half: usize,
}

impl ZonedWavelet {
    pub(crate) fn new(spec: &WaveletSpec, dt: f64, record_length: f64) -> Result<Self> {
        let centres: [f64; ZONES] =
            std::array::from_fn(|k| (k as f64 + 0.5) * record_length / ZONES as f64);
        let wavelets = centres
            .iter()
            .map(|&t| make_wavelet(spec, dt, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(ZonedWavelet {
            centres,
            half: spec.half_length(dt),
            wavelets,
        })
    }

    /// Interpolation weights of the two zones bracketing `t`.
    fn blend(&self, t: f64) -> (usize, usize, f64) {
        if t <= self.centres[0] {
            return (0, 0, 0.0);
        }
        for k in 0..ZONES - 1 {
            if t <= self.centres[k + 1] {
                let w = (t - self.centres[k]) / (self.centres[k + 1] - self.centres[k]);
                return (k, k + 1, w);
            }
        }
        (ZONES - 1, ZONES - 1, 0.0)
    }

    /// Adds the wavelet response of a unit spike at integer sample `at`,
    /// scaled by `amp`, to `trace`.
    fn add_spike(&self, trace: &mut [f64], at: usize, amp: f64, dt: f64) {
        let h = self.half as isize;
        for j in -h..=h {
            let s = at as isize + j;
            if s < 0 || s as usize >= trace.len() {
                continue;
            }
            let (a, b, w) = self.blend(s as f64 * dt);
            let tap = (j + h) as usize;
            let v = (1.0 - w) * self.wavelets[a][tap] + w * self.wavelets[b][tap];
            trace[s as usize] += amp * v;
        }
    }
}

/// Raw double-precision synthesis, time-major `[n_samples, n_traces]`.
pub(crate) fn synth_into(
    out: &mut [f64],
    events: &[EventSpec],
    wavelet: &ZonedWavelet,
    offsets: &[f64],
    n_samples: usize,
    dt: f64,
) -> Vec<usize> {
    let n_traces = offsets.len();
    let mut clipped = Vec::new();
    let mut trace = vec![0.0; n_samples];
    for (tr, &x) in offsets.iter().enumerate() {
        trace.fill(0.0);
        for (e, ev) in events.iter().enumerate() {
            let pos = ev.time_at(x) / dt;
            let base = pos.floor();
            if base < 0.0 || base as usize + 1 >= n_samples {
                if !clipped.contains(&e) {
                    clipped.push(e);
                }
                continue;
            }
            let frac = pos - base;
            let base = base as usize;
            wavelet.add_spike(&mut trace, base, ev.amplitude * (1.0 - frac), dt);
            if frac > 0.0 {
                wavelet.add_spike(&mut trace, base + 1, ev.amplitude * frac, dt);
            }
        }
        for (s, &v) in trace.iter().enumerate() {
            out[s * n_traces + tr] += v;
        }
    }
    clipped.sort_unstable();
    clipped
}

/// Hyperbolic events convolved with a (time-varying) Gabor wavelet.
/// Each event becomes a linearly interpolated fractional-delay spike at
/// `t(x) = sqrt(t0^2 + x^2/v^2)` on every trace; events add linearly.
pub fn synth_prestack(
    events: &[EventSpec],
    wavelet: &WaveletSpec,
    geometry: &GatherGeometry,
) -> Result<Synthesized> {
    geometry.validate()?;
    wavelet.validate(geometry.dt, geometry.record_length())?;
    let zoned = ZonedWavelet::new(wavelet, geometry.dt, geometry.record_length())?;
    let mut raw = vec![0.0; geometry.len()];
    let clipped = synth_into(
        &mut raw,
        events,
        &zoned,
        &geometry.offsets,
        geometry.n_samples,
        geometry.dt,
    );
    let gather = Gather::new(geometry.clone(), raw.iter().map(|&v| v as f32).collect())?;
    Ok(Synthesized { gather, clipped })
}

/// Remaps `input` (time-major, `n_in` samples per trace) onto `n_out`
/// corrected times. Output sample `tau` reads the input at
/// `t = sqrt(tau^2 + x^2/v(tau)^2)`; samples whose stretch `t/tau`
/// exceeds `stretch_limit` are muted.
pub(crate) fn nmo_map(
    input: &[f64],
    n_in: usize,
    n_out: usize,
    offsets: &[f64],
    dt: f64,
    model: &VelocityModel,
    stretch_limit: f64,
) -> Vec<f64> {
    let n_traces = offsets.len();
    let mut out = vec![0.0; n_out * n_traces];
    for (tr, &x) in offsets.iter().enumerate() {
        for s in 0..n_out {
            let tau = s as f64 * dt;
            let t = model.moveout_time(tau, x);
            let stretch = if tau > 0.0 {
                t / tau
            } else if x == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            if stretch > stretch_limit {
                continue;
            }
            let pos = t / dt;
            let i0 = pos.floor() as usize;
            if i0 >= n_in {
                continue;
            }
            let frac = pos - i0 as f64;
            let a = input[i0 * n_traces + tr];
            let b = if i0 + 1 < n_in {
                input[(i0 + 1) * n_traces + tr]
            } else {
                0.0
            };
            out[s * n_traces + tr] = a + frac * (b - a);
        }
    }
    out
}

/// NMO correction of a whole gather with linear interpolation and a
/// stretch mute.
pub fn nmo_correct(gather: &Gather, model: &VelocityModel, stretch_limit: f64) -> Gather {
    let g = &gather.geometry;
    let input: Vec<f64> = gather.data().iter().map(|&v| f64::from(v)).collect();
    let out = nmo_map(&input, g.n_samples, g.n_samples, &g.offsets, g.dt, model, stretch_limit);
    Gather::new(g.clone(), out.iter().map(|&v| v as f32).collect()).expect("same geometry")
}

/// Corrected time (seconds) at which `event` lands on the trace at
/// `offset` after NMO with `model`, choosing the solution nearest `t0`.
/// `None` when the event is off the corrected record or muted there.
pub fn corrected_time(
    event: &EventSpec,
    model: &VelocityModel,
    offset: f64,
    record_length: f64,
    stretch_limit: f64,
) -> Option<f64> {
    let target = event.time_at(offset);
    let f = |tau: f64| model.moveout_time(tau, offset) - target;
    if offset == 0.0 {
        return (event.t0 <= record_length).then_some(event.t0);
    }
    // scan for sign changes, then bisect the one closest to t0
    let steps = 4096;
    let h = record_length / steps as f64;
    let mut best: Option<f64> = None;
    let mut prev = f(0.0);
    for i in 1..=steps {
        let (lo, hi) = ((i - 1) as f64 * h, i as f64 * h);
        let cur = f(hi);
        if prev == 0.0 || prev.signum() != cur.signum() {
            let (mut a, mut b, mut fa) = (lo, hi, prev);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 || fm.signum() != fa.signum() {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            let root = 0.5 * (a + b);
            if best.map_or(true, |r| (root - event.t0).abs() < (r - event.t0).abs()) {
                best = Some(root);
            }
        }
        prev = cur;
    }
    let tau = best?;
    (tau > 0.0 && target / tau <= stretch_limit).then_some(tau)
}

/// Residual move-out in samples at the farthest trace where the corrected
/// event is live: `(tau(x_far) - t0) / dt`. Positive means the event
/// curves down with offset.
pub fn far_offset_rmo(
    event: &EventSpec,
    model: &VelocityModel,
    geometry: &GatherGeometry,
    stretch_limit: f64,
) -> Option<f64> {
    geometry.offsets.iter().rev().find_map(|&x| {
        if x == 0.0 {
            return None;
        }
        corrected_time(event, model, x, geometry.record_length(), stretch_limit)
            .map(|tau| (tau - event.t0) / geometry.dt)
    })
}
