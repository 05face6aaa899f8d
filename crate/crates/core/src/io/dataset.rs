use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gather::{Gather, GatherGeometry};
use crate::synthgen::GatherPair;

use super::{f32s_to_le, read_bytes, read_f32s, read_magic, read_u16, read_u32};

pub const DATASET_MAGIC: [u8; 4] = *b"DMLT";
pub const DATASET_VERSION: u16 = 1;
const KIND: &str = "dataset";
/// Flag bit: a block of `n_traces` f64 offsets follows the header.
const FLAG_OFFSETS: u16 = 1;

/// Fixed 20-byte header: magic, version u16, n_pairs u32, n_traces u16,
/// n_samples u16, dt_micros u32, flags u16.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u16,
    pub n_pairs: u32,
    pub n_traces: u16,
    pub n_samples: u16,
    pub dt_micros: u32,
    pub flags: u16,
}

impl DatasetHeader {
    fn for_geometry(geometry: &GatherGeometry, n_pairs: usize) -> Result<Self> {
        geometry.validate()?;
        let too_big = |what: &str| Error::Config(format!("{what} does not fit the dataset header"));
        let micros = geometry.dt * 1e6;
        if (micros - micros.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "dt {} s is not a whole number of microseconds",
                geometry.dt
            )));
        }
        Ok(DatasetHeader {
            version: DATASET_VERSION,
            n_pairs: u32::try_from(n_pairs).map_err(|_| too_big("pair count"))?,
            n_traces: u16::try_from(geometry.n_traces).map_err(|_| too_big("trace count"))?,
            n_samples: u16::try_from(geometry.n_samples).map_err(|_| too_big("sample count"))?,
            dt_micros: micros.round() as u32,
            flags: FLAG_OFFSETS,
        })
    }

    fn to_bytes(self) -> Vec<u8> {
        let mut b = Vec::with_capacity(20);
        b.extend_from_slice(&DATASET_MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.extend_from_slice(&self.n_pairs.to_le_bytes());
        b.extend_from_slice(&self.n_traces.to_le_bytes());
        b.extend_from_slice(&self.n_samples.to_le_bytes());
        b.extend_from_slice(&self.dt_micros.to_le_bytes());
        b.extend_from_slice(&self.flags.to_le_bytes());
        b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub geometry: GatherGeometry,
    pub pairs: Vec<GatherPair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Streams pairs to disk; the header is written up front, so the number
/// of pairs must be known in advance.
pub struct DatasetWriter {
    out: BufWriter<File>,
    path: PathBuf,
    geometry: GatherGeometry,
    expected: usize,
    written: usize,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, geometry: &GatherGeometry, n_pairs: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let header = DatasetHeader::for_geometry(geometry, n_pairs)?;
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let mut bytes = header.to_bytes();
        for o in &geometry.offsets {
            bytes.extend_from_slice(&o.to_le_bytes());
        }
        out.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        Ok(DatasetWriter {
            out,
            path,
            geometry: geometry.clone(),
            expected: n_pairs,
            written: 0,
        })
    }

    pub fn push(&mut self, pair: &GatherPair) -> Result<()> {
        if self.written == self.expected {
            return Err(Error::Config(format!(
                "dataset header declares {} pairs",
                self.expected
            )));
        }
        for g in [&pair.x, &pair.y, &pair.m] {
            if g.geometry != self.geometry {
                return Err(Error::shape("dataset", "pair geometry differs from header"));
            }
            self.out
                .write_all(&f32s_to_le(g.data()))
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::Config(format!(
                "wrote {} of {} declared pairs",
                self.written, self.expected
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes `pairs` (all sharing `geometry`) to `path`.
pub fn write_dataset(path: impl AsRef<Path>, geometry: &GatherGeometry, pairs: &[GatherPair]) -> Result<()> {
    let mut w = DatasetWriter::create(path, geometry, pairs.len())?;
    for p in pairs {
        w.push(p)?;
    }
    w.finish()
}

/// Pair-by-pair reader over any byte source.
pub struct DatasetReader<R> {
    input: R,
    pub header: DatasetHeader,
    pub geometry: GatherGeometry,
    next: usize,
}

impl<R: Read> DatasetReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        read_magic(&mut input, KIND, DATASET_MAGIC)?;
        let version = read_u16(&mut input, KIND, "header")?;
        if version != DATASET_VERSION {
            return Err(Error::Version {
                kind: KIND,
                found: version,
                supported: DATASET_VERSION,
            });
        }
        let header = DatasetHeader {
            version,
            n_pairs: read_u32(&mut input, KIND, "header")?,
            n_traces: read_u16(&mut input, KIND, "header")?,
            n_samples: read_u16(&mut input, KIND, "header")?,
            dt_micros: read_u32(&mut input, KIND, "header")?,
            flags: read_u16(&mut input, KIND, "header")?,
        };
        if header.n_traces == 0 || header.n_samples == 0 || header.dt_micros == 0 {
            return Err(Error::Malformed {
                kind: KIND,
                detail: format!("zero dimension in header {header:?}"),
            });
        }
        let n_traces = usize::from(header.n_traces);
        let dt = f64::from(header.dt_micros) / 1e6;
        let geometry = if header.flags & FLAG_OFFSETS != 0 {
            let mut bytes = vec![0u8; n_traces * 8];
            read_bytes(&mut input, &mut bytes, KIND, || "offsets".into())?;
            let offsets = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            GatherGeometry {
                n_traces,
                n_samples: usize::from(header.n_samples),
                dt,
                offsets,
            }
        } else {
            GatherGeometry::regular(
                n_traces,
                usize::from(header.n_samples),
                dt,
                GatherGeometry::default().max_offset(),
            )
        };
        geometry.validate().map_err(|e| Error::Malformed {
            kind: KIND,
            detail: e.to_string(),
        })?;
        Ok(DatasetReader {
            input,
            header,
            geometry,
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.header.n_pairs as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read_pair(&mut self) -> Result<Option<GatherPair>> {
        if self.next == self.len() {
            return Ok(None);
        }
        let i = self.next;
        let n = self.len();
        let mut parts = Vec::with_capacity(3);
        for name in ["x", "y", "m"] {
            let mut data = vec![0f32; self.geometry.len()];
            read_f32s(&mut self.input, &mut data, KIND, || {
                format!("pair {i} of {n} ({name})")
            })?;
            parts.push(Gather::new(self.geometry.clone(), data)?);
        }
        self.next += 1;
        let m = parts.pop().expect("three parts");
        let y = parts.pop().expect("three parts");
        let x = parts.pop().expect("three parts");
        Ok(Some(GatherPair { x, y, m, info: None }))
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<GatherPair>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_pair().transpose()
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = DatasetReader::new(BufReader::new(file))?;
    let geometry = reader.geometry.clone();
    let pairs = reader.collect::<Result<Vec<_>>>()?;
    Ok(Dataset { geometry, pairs })
}
