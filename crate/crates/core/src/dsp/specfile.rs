//! `SPEC1` matrix files: 16-byte header then row-major little-endian f32.
//!
//! Header layout: bytes 0..5 `SPEC1`, 5..8 zero, 8..12 u32 rows (bins),
//! 12..16 u32 columns (frames).

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"SPEC1";

pub fn encode(values: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = values.dim();
    let mut out = Vec::with_capacity(16 + 4 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Array2<f32>> {
    let bad = |d: &str| Error::InvalidArgument(format!("SPEC1: {d}"));
    if bytes.len() < 16 || &bytes[..5] != MAGIC {
        return Err(bad("missing header"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(bad("payload size does not match header"));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(&e.to_string()))
}

pub fn write(path: impl AsRef<Path>, values: &Array2<f32>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(values)).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
