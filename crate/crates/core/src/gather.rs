//! Seismic gathers: a traces x time-samples image plus acquisition geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherGeometry {
    pub n_traces: usize,
    pub n_samples: usize,
    /// Sample interval in seconds.
    pub dt: f64,
    /// Source-receiver offsets in meters, one per trace.
    pub offsets: Vec<f64>,
}

impl Default for GatherGeometry {
    fn default() -> Self {
        Self::regular(64, 256, 0.004, 3000.0)
    }
}

impl GatherGeometry {
    /// Evenly spaced offsets from 0 to `max_offset`.
    pub fn regular(n_traces: usize, n_samples: usize, dt: f64, max_offset: f64) -> Self {
        let step = if n_traces > 1 {
            max_offset / (n_traces - 1) as f64
        } else {
            0.0
        };
        GatherGeometry {
            n_traces,
            n_samples,
            dt,
            offsets: (0..n_traces).map(|i| i as f64 * step).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traces == 0 || self.n_samples == 0 {
            return Err(Error::Config("gather dimensions must be nonzero".into()));
        }
        if self.offsets.len() != self.n_traces {
            return Err(Error::Config(format!(
                "{} offsets for {} traces",
                self.offsets.len(),
                self.n_traces
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("offsets must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_traces * self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_offset(&self) -> f64 {
        self.offsets.last().copied().unwrap_or(0.0)
    }

    /// Time of the last sample, in seconds.
    pub fn record_length(&self) -> f64 {
        (self.n_samples - 1) as f64 * self.dt
    }
}

/// Amplitudes stored time-major: `data[sample * n_traces + trace]`, which
/// is the row-major layout of a `[time, trace]` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Gather {
    pub geometry: GatherGeometry,
    data: Vec<f32>,
}

impl Gather {
    pub fn new(geometry: GatherGeometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::shape(
                "gather",
                format!(
                    "{} values for a {}x{} gather",
                    data.len(),
                    geometry.n_samples,
                    geometry.n_traces
                ),
            ));
        }
        Ok(Gather { geometry, data })
    }

    pub fn zeros(geometry: GatherGeometry) -> Self {
        let data = vec![0.0; geometry.len()];
        Gather { geometry, data }
    }

    pub fn n_traces(&self) -> usize {
        self.geometry.n_traces
    }

    pub fn n_samples(&self) -> usize {
        self.geometry.n_samples
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, trace: usize, sample: usize) -> f32 {
        self.data[sample * self.geometry.n_traces + trace]
    }

    #[inline]
    pub fn set(&mut self, trace: usize, sample: usize, value: f32) {
        let n = self.geometry.n_traces;
        self.data[sample * n + trace] = value;
    }

    pub fn trace(&self, trace: usize) -> Vec<f32> {
        (0..self.n_samples()).map(|s| self.get(trace, s)).collect()
    }

    pub fn set_trace(&mut self, trace: usize, values: &[f32]) {
        for (s, &v) in values.iter().enumerate().take(self.n_samples()) {
            self.set(trace, s, v);
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v) * f64::from(v)).sum()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Same geometry, new amplitudes.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Gather::new(self.geometry.clone(), data)
    }

    /// `[1, 1, time, trace]` tensor, or `[1, 1, trace, time]` when transposed.
    pub fn to_tensor(&self, transpose: bool) -> Tensor<f32> {
        let (h, w) = self.image_dims(transpose);
        let data = if transpose {
            transpose_image(&self.data, self.n_samples(), self.n_traces())
        } else {
            self.data.clone()
        };
        Tensor::new(vec![1, 1, h, w], data).expect("gather dims are nonzero")
    }

    pub fn image_dims(&self, transpose: bool) -> (usize, usize) {
        if transpose {
            (self.n_traces(), self.n_samples())
        } else {
            (self.n_samples(), self.n_traces())
        }
    }

    /// Inverse of [`Gather::to_tensor`] for one image of a batch.
    pub fn from_image(geometry: GatherGeometry, image: &[f32], transpose: bool) -> Result<Self> {
        let data = if transpose {
            transpose_image(image, geometry.n_traces, geometry.n_samples)
        } else {
            image.to_vec()
        };
        Gather::new(geometry, data)
    }
}

/// Row-major `rows x cols` to row-major `cols x rows`.
pub fn transpose_image(data: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Splits `input` into `(primaries, removed)` with `removed` close to
/// `estimate` and `primaries + removed == input` in f32 arithmetic for
/// every sample.
///
/// Removed amplitudes are first rounded to the grid spaced at the ulp of
/// the input's peak amplitude and limited to the peak's binade. Inputs on
/// that grid (generated gathers are fixed-point) then subtract exactly.
/// A sample off the grid whose rounded split does not add back falls
/// back to the grid of its own lowest set bit, where the subtraction is
/// exact again at the cost of a tighter bound on the removed amplitude.
pub fn split_exact(input: &[f32], estimate: &[f64]) -> (Vec<f32>, Vec<f32>) {
    assert_eq!(input.len(), estimate.len(), "split_exact length mismatch");
    let peak = input.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        let removed: Vec<f32> = estimate.iter().map(|&e| e as f32).collect();
        let primaries = input.iter().zip(&removed).map(|(a, r)| a - r).collect();
        return (primaries, removed);
    }
    let quantum = ulp_of_binade(peak);
    let mut primaries = Vec::with_capacity(input.len());
    let mut removed = Vec::with_capacity(input.len());
    for (&a, &e) in input.iter().zip(estimate) {
        let e = if e.is_finite() { e } else { 0.0 };
        let mut r = snap(a, e, quantum) as f32;
        let mut p = a - r;
        if p + r != a {
            r = snap(a, e, lowest_bit(a).min(quantum)) as f32;
            p = a - r;
        }
        removed.push(r);
        primaries.push(p);
    }
    (primaries, removed)
}

/// Spacing of f32 values in the binade of `v`.
fn ulp_of_binade(v: f32) -> f64 {
    (f64::from(v.abs()).log2().floor() - 23.0).exp2()
}

/// Value of the least significant set bit of a nonzero finite `a`.
fn lowest_bit(a: f32) -> f64 {
    let bits = a.to_bits() & 0x7fff_ffff;
    let (mantissa, exponent) = match bits >> 23 {
        0 => (bits, -149),
        e => ((bits & 0x7f_ffff) | 0x80_0000, e as i32 - 150),
    };
    f64::from(exponent + mantissa.trailing_zeros() as i32).exp2()
}

/// `e` rounded to multiples of `u` and limited so that `a - r` stays
/// within 24 significant bits of `u`, which makes it exact whenever `a`
/// is itself a multiple of `u`.
fn snap(a: f32, e: f64, u: f64) -> f64 {
    let limit = (2f64.powi(24) * u).min(f64::from(f32::MAX)) - f64::from(a.abs());
    let limit = limit.max(0.0);
    let limit = (limit / u).floor() * u;
    ((e / u).round() * u).clamp(-limit, limit)
}
