//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! "NGNNCKPT" | u32 version | u64 n | n bytes of config JSON
//! | u64 tensor count | per tensor: u64 rows, u64 cols, rows*cols f32
//! ```
//!
//! Tensors follow the parameter registry order of [`build_model`].

use std::fs;
use std::path::Path;

use super::{build_model, Model, ModelConfig};
use crate::error::{NgnnError, Result};
use crate::rng::{stream, streams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NGNNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(m: &Model<f32>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(&m.config)?;
    let mut out = Vec::with_capacity(32 + config.len() + 4 * m.params.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(m.params.len() as u64).to_le_bytes());
    for t in m.params.tensors() {
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| format!("length {v} does not fit in memory"))
    }
}

/// Rebuilds a model from checkpoint bytes. Errors are plain messages;
/// [`load_checkpoint`] attaches the path.
pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Model<f32>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err("missing NGNNCKPT header".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let len = r.u64()?;
    let config: ModelConfig =
        serde_json::from_slice(r.take(len)?).map_err(|e| format!("config: {e}"))?;
    // Any seed works: every tensor is overwritten below.
    let mut model = build_model::<f32, _>(&config, &mut stream(0, streams::INIT))
        .map_err(|e| format!("config: {e}"))?;
    let count = r.u64()?;
    if count != model.params.len() {
        return Err(format!("{count} tensors, config implies {}", model.params.len()));
    }
    for (i, slot) in model.params.tensors_mut().iter_mut().enumerate() {
        let (rows, cols) = (r.u64()?, r.u64()?);
        if (rows, cols) != slot.shape() {
            return Err(format!("tensor {i} is {rows}x{cols}, expected {:?}", slot.shape()));
        }
        let raw = r.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *slot = Tensor::from_vec(rows, cols, data).map_err(|e| e.to_string())?;
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(model)
}

pub fn save_checkpoint(m: &Model<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(m)?).map_err(|e| NgnnError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let bytes = fs::read(path).map_err(|e| NgnnError::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|reason| NgnnError::format(path, reason))
}
