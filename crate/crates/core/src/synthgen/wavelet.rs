use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletSpec {
    /// +1 or -1.
    pub polarity: f64,
    /// Carrier phase offset in degrees.
    pub phase: f64,
    /// Central frequency in Hz at time zero.
    pub f_center: f64,
    /// Full width of the amplitude spectrum at half maximum, Hz.
    pub bandwidth: f64,
    /// Fractional drop of the central frequency per second of record.
    pub f_decay: f64,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        WaveletSpec {
            polarity: 1.0,
            phase: 0.0,
            f_center: 25.0,
            bandwidth: 20.0,
            f_decay: 0.0,
        }
    }
}

impl WaveletSpec {
    pub fn validate(&self, dt: f64, record_length: f64) -> Result<()> {
        let nyquist = 0.5 / dt;
        if self.polarity != 1.0 && self.polarity != -1.0 {
            return Err(Error::Config(format!("polarity must be +1 or -1, got {}", self.polarity)));
        }
        if !(self.f_center > 0.0 && self.f_center < nyquist) {
            return Err(Error::Config(format!(
                "central frequency {} Hz outside (0, {nyquist}) Hz",
                self.f_center
            )));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::Config(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.f_decay >= 0.0 && self.f_decay * record_length < 1.0) {
            return Err(Error::Config(format!(
                "frequency decay {} must lie in [0, 1/record_length)",
                self.f_decay
            )));
        }
        Ok(())
    }

    /// Central frequency at record time `t`.
    pub fn effective_frequency(&self, t: f64) -> f64 {
        self.f_center * (1.0 - self.f_decay * t)
    }

    /// Standard deviation of the time-domain Gaussian envelope, seconds.
    pub fn envelope_sigma(&self) -> f64 {
        let sigma_f = self.bandwidth / (2.0 * (2.0 * 2f64.ln()).sqrt());
        1.0 / (2.0 * PI * sigma_f)
    }

    /// Samples on each side of the centre needed to hold the envelope.
    pub fn half_length(&self, dt: f64) -> usize {
        (4.0 * self.envelope_sigma() / dt).ceil() as usize
    }
}

/// Gabor wavelet sampled at `dt`, as it looks at record time `t`.
/// Returns `2h + 1` samples with the centre at index `h`, scaled to unit
/// peak amplitude and then multiplied by the polarity.
pub fn make_wavelet(spec: &WaveletSpec, dt: f64, t: f64) -> Result<Vec<f64>> {
    let fc = spec.effective_frequency(t);
    if !(fc > 0.0) {
        return Err(Error::WaveletFrequency(fc));
    }
    let sigma = spec.envelope_sigma();
    let phase = spec.phase.to_radians();
    let h = spec.half_length(dt) as isize;
    let mut w: Vec<f64> = (-h..=h)
        .map(|i| {
            let s = i as f64 * dt;
            (-s * s / (2.0 * sigma * sigma)).exp() * (2.0 * PI * fc * s + phase).cos()
        })
        .collect();
    let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in &mut w {
        *v = *v / peak * spec.polarity;
    }
    Ok(w)
}
