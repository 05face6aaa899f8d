//! Validation metrics: MSE, SNR, SSIM and PCORR.
//!
//! Images are row-major `rows × cols` slices. For gathers the rows are
//! time samples and the columns traces, matching [`Gather::data`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gather::Gather;

/// Value reported by [`snr_db`] when the estimate equals the reference.
pub const SNR_CAP_DB: f64 = 140.0;
/// Default SSIM dynamic range for data in [-1, 1].
pub const SSIM_RANGE: f64 = 2.0;
/// Half-width of the PCORR lag search along each axis.
pub const PCORR_MAX_LAG: usize = 8;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn same_len(metric: &'static str, a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(metric, format!("{} vs {} values", a.len(), b.len())));
    }
    Ok(())
}

fn check_image(metric: &'static str, a: &[f32], b: &[f32], rows: usize, cols: usize) -> Result<()> {
    same_len(metric, a, b)?;
    if a.len() != rows * cols {
        return Err(Error::shape(
            metric,
            format!("{} values for a {rows}x{cols} image", a.len()),
        ));
    }
    Ok(())
}

/// Mean of squared differences. Unlike the training loss there is no ½.
pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    same_len("mse", a, b)?;
    if a.is_empty() {
        return Err(Error::Metric {
            metric: "mse",
            detail: "empty input".into(),
        });
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(Σ ref² / Σ (ref − est)²)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(reference: &[f32], estimate: &[f32]) -> Result<f64> {
    same_len("snr_db", reference, estimate)?;
    let signal: f64 = reference.iter().map(|&v| f64::from(v).powi(2)).sum();
    if signal == 0.0 {
        return Err(Error::Metric {
            metric: "snr_db",
            detail: "reference is all zero".into(),
        });
    }
    let noise: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(&r, &e)| (f64::from(r) - f64::from(e)).powi(2))
        .sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering with the SSIM window.
fn filter(img: &[f64], rows: usize, cols: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let (orow, ocol) = (rows - k + 1, cols - k + 1);
    let mut tmp = vec![0.0; rows * ocol];
    for r in 0..rows {
        let line = &img[r * cols..(r + 1) * cols];
        for c in 0..ocol {
            tmp[r * ocol + c] = w.iter().zip(&line[c..c + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; orow * ocol];
    for r in 0..orow {
        for (i, &wi) in w.iter().enumerate() {
            let src = &tmp[(r + i) * ocol..(r + i + 1) * ocol];
            for (o, s) in out[r * ocol..(r + 1) * ocol].iter_mut().zip(src) {
                *o += wi * s;
            }
        }
    }
    out
}

/// Mean local SSIM over an 11×11 Gaussian window (σ 1.5) with
/// `C1 = (0.01 L)²` and `C2 = (0.03 L)²`. The window only visits
/// positions fully inside the image.
pub fn ssim(a: &[f32], b: &[f32], rows: usize, cols: usize, range: f64) -> Result<f64> {
    check_image("ssim", a, b, rows, cols)?;
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Metric {
            metric: "ssim",
            detail: format!("{rows}x{cols} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        });
    }
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let w = gaussian_window();
    let fa: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let fb: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter(&fa, rows, cols, &w);
    let mu_b = filter(&fb, rows, cols, &w);
    let aa = filter(&prod(&fa, &fa), rows, cols, &w);
    let bb = filter(&prod(&fb, &fb), rows, cols, &w);
    let ab = filter(&prod(&fa, &fb), rows, cols, &w);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Peak normalized cross-correlation and the lag `(dr, dc)` where it
/// occurs, with `b[r + dr][c + dc]` aligned to `a[r][c]`.
///
/// Both images are made zero-mean first. At each lag the correlation is
/// normalized by the norms of the overlapping parts, so a pure shift
/// scores 1 regardless of what was shifted out.
pub fn pcorr(a: &[f32], b: &[f32], rows: usize, cols: usize) -> Result<(f64, (isize, isize))> {
    check_image("pcorr", a, b, rows, cols)?;
    let centred = |v: &[f32]| -> Result<Vec<f64>> {
        let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len().max(1) as f64;
        let out: Vec<f64> = v.iter().map(|&x| f64::from(x) - mean).collect();
        if out.iter().all(|&x| x == 0.0) {
            return Err(Error::Metric {
                metric: "pcorr",
                detail: "input image is constant".into(),
            });
        }
        Ok(out)
    };
    let za = centred(a)?;
    let zb = centred(b)?;
    let lr = PCORR_MAX_LAG.min(rows - 1) as isize;
    let lc = PCORR_MAX_LAG.min(cols - 1) as isize;
    let mut best: Option<(f64, (isize, isize))> = None;
    for dr in -lr..=lr {
        for dc in -lc..=lc {
            let r0 = 0.max(-dr) as usize;
            let r1 = (rows as isize).min(rows as isize - dr) as usize;
            let c0 = 0.max(-dc) as usize;
            let c1 = (cols as isize).min(cols as isize - dc) as usize;
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for r in r0..r1 {
                let ra = &za[r * cols..(r + 1) * cols];
                let rb = (r as isize + dr) as usize * cols;
                for c in c0..c1 {
                    let x = ra[c];
                    let y = zb[rb + (c as isize + dc) as usize];
                    xy += x * y;
                    xx += x * x;
                    yy += y * y;
                }
            }
            if xx == 0.0 || yy == 0.0 {
                continue;
            }
            let v = (xy / (xx * yy).sqrt()).clamp(-1.0, 1.0);
            if best.map_or(true, |(b, _)| v > b) {
                best = Some((v, (dr, dc)));
            }
        }
    }
    best.ok_or_else(|| Error::Metric {
        metric: "pcorr",
        detail: "no lag has a non-degenerate overlap".into(),
    })
}

/// The four metrics, in the order they appear in logs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    SnrDb,
    Ssim,
    Pcorr,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mse, Metric::SnrDb, Metric::Ssim, Metric::Pcorr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::SnrDb => "snr_db",
            Metric::Ssim => "ssim",
            Metric::Pcorr => "pcorr",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Metrics of one estimate against its reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherMetrics {
    pub mse: f64,
    pub snr_db: f64,
    pub ssim: f64,
    pub pcorr: f64,
}

impl GatherMetrics {
    pub fn compute(reference: &Gather, estimate: &Gather) -> Result<Self> {
        if reference.n_traces() != estimate.n_traces() || reference.n_samples() != estimate.n_samples() {
            return Err(Error::shape(
                "metrics",
                format!(
                    "{}x{} vs {}x{}",
                    reference.n_traces(),
                    reference.n_samples(),
                    estimate.n_traces(),
                    estimate.n_samples()
                ),
            ));
        }
        let (r, e) = (reference.data(), estimate.data());
        let (rows, cols) = (reference.n_samples(), reference.n_traces());
        Ok(GatherMetrics {
            mse: mse(r, e)?,
            snr_db: snr_db(r, e)?,
            ssim: ssim(r, e, rows, cols, SSIM_RANGE)?,
            pcorr: pcorr(r, e, rows, cols)?.0,
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Mse => self.mse,
            Metric::SnrDb => self.snr_db,
            Metric::Ssim => self.ssim,
            Metric::Pcorr => self.pcorr,
        }
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// NaN mean and zero std for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            std: if values.is_empty() { 0.0 } else { var.sqrt() },
        }
    }
}

/// Dataset-level mean ± std of each metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: Summary,
    pub snr_db: Summary,
    pub ssim: Summary,
    pub pcorr: Summary,
}

impl MetricReport {
    pub fn from_samples(samples: &[GatherMetrics]) -> Self {
        let of = |m: Metric| Summary::of(&samples.iter().map(|s| s.get(m)).collect::<Vec<_>>());
        MetricReport {
            mse: of(Metric::Mse),
            snr_db: of(Metric::SnrDb),
            ssim: of(Metric::Ssim),
            pcorr: of(Metric::Pcorr),
        }
    }

    pub fn get(&self, metric: Metric) -> Summary {
        match metric {
            Metric::Mse => self.mse,
            Metric::SnrDb => self.snr_db,
            Metric::Ssim => self.ssim,
            Metric::Pcorr => self.pcorr,
        }
    }
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, m) in Metric::ALL.into_iter().enumerate() {
            let s = self.get(m);
            if i > 0 {
                f.write_str("  ")?;
            }
            write!(f, "{m} {:.4} ± {:.4}", s.mean, s.std)?;
        }
        Ok(())
    }
}
