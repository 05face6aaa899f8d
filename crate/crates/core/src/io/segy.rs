use std::path::Path;

use crate::error::{Error, Result};
use crate::gather::{Gather, GatherGeometry};

const KIND: &str = "SEG-Y";
const TEXT_HEADER: usize = 3200;
const BINARY_HEADER: usize = 400;
const TRACE_HEADER: usize = 240;

/// What the binary header declares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegyLayout {
    pub interval_micros: u16,
    pub n_samples: usize,
    pub format: u16,
}

/// IBM System/360 single-precision float: sign, 7-bit base-16 exponent
/// biased by 64, 24-bit fraction `0.mantissa`.
pub fn ibm_to_f32(word: u32) -> f32 {
    let sign = if word >> 31 == 1 { -1.0 } else { 1.0 };
    let exponent = ((word >> 24) & 0x7f) as i32 - 64;
    let fraction = (word & 0x00ff_ffff) as f64 / (1u32 << 24) as f64;
    (sign * fraction * 16f64.powi(exponent)) as f32
}

fn be_u16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be_i32(b: &[u8], at: usize) -> i32 {
    i32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn truncated(what: String) -> Error {
    Error::Truncated { kind: KIND, what }
}

/// Reads every trace of an in-memory SEG-Y file and groups consecutive
/// traces into gathers of `traces_per_gather`.
///
/// Each gather is fitted to `target`'s trace and sample counts: the time
/// axis is centre-cropped (or centre-padded with zeros) and the trace
/// axis is linearly resampled. A trailing incomplete gather is dropped.
pub fn parse_segy(
    bytes: &[u8],
    traces_per_gather: usize,
    target: &GatherGeometry,
) -> Result<(SegyLayout, Vec<Gather>)> {
    if traces_per_gather == 0 {
        return Err(Error::Config("traces_per_gather must be positive".into()));
    }
    target.validate()?;
    if bytes.len() < TEXT_HEADER + BINARY_HEADER {
        return Err(truncated("file headers".into()));
    }
    let bin = &bytes[TEXT_HEADER..TEXT_HEADER + BINARY_HEADER];
    let layout = SegyLayout {
        interval_micros: be_u16(bin, 16),
        n_samples: usize::from(be_u16(bin, 20)),
        format: be_u16(bin, 24),
    };
    if layout.format != 1 && layout.format != 5 {
        return Err(Error::SegyFormat(layout.format));
    }
    if layout.n_samples == 0 {
        return Err(Error::Malformed {
            kind: KIND,
            detail: "binary header declares zero samples per trace".into(),
        });
    }
    let ns = layout.n_samples;
    let mut traces = Vec::new();
    let mut offsets = Vec::new();
    let mut pos = TEXT_HEADER + BINARY_HEADER;
    while pos < bytes.len() {
        let index = traces.len();
        let header = bytes
            .get(pos..pos + TRACE_HEADER)
            .ok_or_else(|| truncated(format!("header of trace {index}")))?;
        let declared = usize::from(be_u16(header, 114));
        if declared != 0 && declared != ns {
            return Err(Error::SegyTraceLength {
                trace: index,
                expected: ns,
                found: declared,
            });
        }
        let start = pos + TRACE_HEADER;
        let body = bytes
            .get(start..start + 4 * ns)
            .ok_or_else(|| truncated(format!("samples of trace {index}")))?;
        let samples: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| {
                let word = u32::from_be_bytes([c[0], c[1], c[2], c[3]]);
                if layout.format == 1 {
                    ibm_to_f32(word)
                } else {
                    f32::from_bits(word)
                }
            })
            .collect();
        offsets.push(f64::from(be_i32(header, 36)).abs());
        traces.push(samples);
        pos = start + 4 * ns;
    }
    let complete = traces.len() / traces_per_gather;
    if traces.len() % traces_per_gather != 0 {
        log::warn!(
            "dropping {} trailing traces that do not fill a gather of {traces_per_gather}",
            traces.len() % traces_per_gather
        );
    }
    let dt = if layout.interval_micros > 0 {
        f64::from(layout.interval_micros) / 1e6
    } else {
        target.dt
    };
    let gathers = (0..complete)
        .map(|k| {
            let range = k * traces_per_gather..(k + 1) * traces_per_gather;
            fit_gather(&traces[range.clone()], &offsets[range], dt, target)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((layout, gathers))
}

fn fit_gather(traces: &[Vec<f32>], offsets: &[f64], dt: f64, target: &GatherGeometry) -> Result<Gather> {
    let ns = traces[0].len();
    let n_out = target.n_samples;
    // centre crop (positive shift) or centre pad (negative)
    let shift = (ns as isize - n_out as isize) / 2;
    let timed: Vec<Vec<f32>> = traces
        .iter()
        .map(|tr| {
            (0..n_out as isize)
                .map(|s| {
                    let src = s + shift;
                    if src >= 0 && (src as usize) < ns {
                        tr[src as usize]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let n_in = traces.len();
    let position = |j: usize| -> (usize, f64) {
        if target.n_traces == 1 || n_in == 1 {
            return (0, 0.0);
        }
        let p = j as f64 * (n_in - 1) as f64 / (target.n_traces - 1) as f64;
        let i = (p.floor() as usize).min(n_in - 2);
        (i, p - i as f64)
    };
    let mut data = vec![0f32; target.len()];
    let mut new_offsets = Vec::with_capacity(target.n_traces);
    for j in 0..target.n_traces {
        let (i, w) = position(j);
        let next = (i + 1).min(n_in - 1);
        for s in 0..n_out {
            let a = timed[i][s];
            let b = timed[next][s];
            data[s * target.n_traces + j] = a + (b - a) * w as f32;
        }
        new_offsets.push(offsets[i] + (offsets[next] - offsets[i]) * w);
    }
    let mut geometry = GatherGeometry {
        n_traces: target.n_traces,
        n_samples: n_out,
        dt,
        offsets: new_offsets,
    };
    if geometry.validate().is_err() {
        log::debug!("trace-header offsets unusable; using target offsets");
        geometry.offsets = target.offsets.clone();
    }
    Gather::new(geometry, data)
}

pub fn read_segy_gathers(
    path: impl AsRef<Path>,
    traces_per_gather: usize,
    target: &GatherGeometry,
) -> Result<Vec<Gather>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_segy(&bytes, traces_per_gather, target).map(|(_, g)| g)
}
