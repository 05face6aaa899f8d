//! File formats: datasets, checkpoints, SEG-Y ingestion and PGM images.
//!
//! Dataset and checkpoint integers and floats are little-endian; SEG-Y is
//! big-endian as the standard requires.

mod checkpoint;
mod dataset;
mod pgm;
mod segy;

use std::io::Read;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{
    read_dataset, write_dataset, Dataset, DatasetHeader, DatasetReader, DatasetWriter,
    DATASET_MAGIC, DATASET_VERSION,
};
pub use pgm::{normalize_to_u8, read_pgm, write_pgm, Image};
pub use segy::{ibm_to_f32, parse_segy, read_segy_gathers, SegyLayout};

/// `read_exact` that reports end-of-file as a typed truncation error.
pub(crate) fn read_bytes<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    kind: &'static str,
    what: impl FnOnce() -> String,
) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated { kind, what: what() },
        _ => Error::Malformed {
            kind,
            detail: e.to_string(),
        },
    })
}

pub(crate) fn read_u16<R: Read>(r: &mut R, kind: &'static str, what: &str) -> Result<u16> {
    let mut b = [0; 2];
    read_bytes(r, &mut b, kind, || what.to_string())?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R, kind: &'static str, what: &str) -> Result<u32> {
    let mut b = [0; 4];
    read_bytes(r, &mut b, kind, || what.to_string())?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_magic<R: Read>(r: &mut R, kind: &'static str, expected: [u8; 4]) -> Result<()> {
    let mut found = [0; 4];
    read_bytes(r, &mut found, kind, || "magic".into())?;
    if found != expected {
        return Err(Error::Magic {
            kind,
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(
    r: &mut R,
    out: &mut [f32],
    kind: &'static str,
    what: impl FnOnce() -> String,
) -> Result<()> {
    let mut bytes = vec![0u8; out.len() * 4];
    read_bytes(r, &mut bytes, kind, what)?;
    for (v, b) in out.iter_mut().zip(bytes.chunks_exact(4)) {
        *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    }
    Ok(())
}

pub(crate) fn f32s_to_le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}
