use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unet::{Model, UNetConfig};

use super::{f32s_to_le, read_bytes, read_f32s, read_magic, read_u16, read_u32};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DMLW";
pub const CHECKPOINT_VERSION: u16 = 1;
const KIND: &str = "checkpoint";

/// The config block: TOML text, so checkpoints stay inspectable.
#[derive(Serialize, Deserialize)]
struct ConfigBlock {
    unet: UNetConfig,
    transpose: bool,
}

/// Layout: magic, version u16, config length u32 + TOML bytes, tensor
/// count u32, then per tensor a u32 length and that many f32 values, in
/// build order.
pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model, transpose: bool) -> Result<()> {
    let path = path.as_ref();
    let block = toml::to_string(&ConfigBlock {
        unet: model.config.clone(),
        transpose,
    })
    .map_err(|e| Error::Malformed {
        kind: KIND,
        detail: e.to_string(),
    })?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(&CHECKPOINT_MAGIC).map_err(io)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(block.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(block.as_bytes()).map_err(io)?;
    out.write_all(&(model.params.len() as u32).to_le_bytes()).map_err(io)?;
    for (_, t) in model.params.iter() {
        out.write_all(&(t.numel() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&f32s_to_le(t.data())).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Returns the model and the transpose flag it was trained with.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, bool)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

pub(crate) fn read_checkpoint<R: Read>(mut r: R) -> Result<(Model, bool)> {
    read_magic(&mut r, KIND, CHECKPOINT_MAGIC)?;
    let version = read_u16(&mut r, KIND, "header")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            kind: KIND,
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let len = read_u32(&mut r, KIND, "config length")? as usize;
    let mut text = vec![0u8; len];
    read_bytes(&mut r, &mut text, KIND, || "config block".into())?;
    let malformed = |detail: String| Error::Malformed { kind: KIND, detail };
    let text = String::from_utf8(text).map_err(|e| malformed(e.to_string()))?;
    let block: ConfigBlock = toml::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    let mut model = Model::build(&block.unet, 0)?;
    let count = read_u32(&mut r, KIND, "tensor count")? as usize;
    if count != model.params.len() {
        return Err(malformed(format!(
            "{count} tensors stored, architecture has {}",
            model.params.len()
        )));
    }
    let mut blobs = Vec::with_capacity(count);
    for i in 0..count {
        let n = read_u32(&mut r, KIND, "tensor length")? as usize;
        if n != model.params.get(i).numel() {
            return Err(malformed(format!(
                "tensor {i} ({}) has {n} values, expected {}",
                model.params.name(i),
                model.params.get(i).numel()
            )));
        }
        let mut data = vec![0f32; n];
        read_f32s(&mut r, &mut data, KIND, || format!("tensor {i}"))?;
        blobs.push(data);
    }
    model.load_weights(blobs)?;
    Ok((model, block.transpose))
}
