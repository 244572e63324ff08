//! On-disk dataset formats.
//!
//! - edge lists: text, one `u v` pair of 0-based ids per line;
//! - features: binary, magic `NGNNF1`, `u64` rows, `u64` cols, then
//!   `rows * cols` little-endian `f32` values row-major;
//! - labels and node-id lists: text, one integer per line.
//!
//! Blank lines and lines starting with `#` are ignored in text files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{NgnnError, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 6] = b"NGNNF1";

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.txt";
pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const VALID_POS_FILE: &str = "valid_pos.txt";
pub const VALID_NEG_FILE: &str = "valid_neg.txt";
pub const TEST_POS_FILE: &str = "test_pos.txt";
pub const TEST_NEG_FILE: &str = "test_neg.txt";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| NgnnError::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_id(path: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| NgnnError::format(path, format!("line {line}: {tok:?} is not a node id")))
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (line, l) in content_lines(&text) {
        let mut toks = l.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(NgnnError::format(path, format!("line {line}: expected two ids")));
        };
        edges.push((parse_id(path, line, a)?, parse_id(path, line, b)?));
    }
    Ok(edges)
}

pub fn write_edge_list(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = String::with_capacity(edges.len() * 12);
    for (u, v) in edges {
        out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(path, out).map_err(|e| NgnnError::io(path, e))
}

pub fn read_ids(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(line, l)| parse_id(path, line, l))
        .collect()
}

pub fn write_ids(path: &Path, ids: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(ids.len() * 6);
    for id in ids {
        out.push_str(&format!("{id}\n"));
    }
    fs::write(path, out).map_err(|e| NgnnError::io(path, e))
}

pub fn write_features(path: &Path, x: &Tensor<f32>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| NgnnError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| NgnnError::io(path, e);
    w.write_all(FEATURE_MAGIC).map_err(io)?;
    w.write_all(&(x.rows() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(x.cols() as u64).to_le_bytes()).map_err(io)?;
    for v in x.data() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| NgnnError::io(path, e))?;
    decode_features(&bytes).map_err(|reason| NgnnError::format(path, reason))
}

fn decode_features(bytes: &[u8]) -> std::result::Result<Tensor<f32>, String> {
    const HEADER: usize = 6 + 8 + 8;
    if bytes.len() < HEADER || &bytes[..6] != FEATURE_MAGIC {
        return Err("missing NGNNF1 header".into());
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER))
        .ok_or("feature dimensions overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "{} bytes for a {rows}x{cols} matrix (expected {expected})",
            bytes.len()
        ));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(rows, cols, data).map_err(|e| e.to_string())
}
