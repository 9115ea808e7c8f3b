//! On-disk encodings shared by the artifact formats: float32 little-endian
//! blocks, base64-wrapped when embedded in JSON.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::Vector;

pub fn f32_le_bytes<'a>(values: impl IntoIterator<Item = &'a f64>) -> Vec<u8> {
    values.into_iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn f32_from_le_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format(format!("float32 block length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

pub fn encode_f32_base64<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    STANDARD.encode(f32_le_bytes(values))
}

pub fn decode_f32_base64(text: &str, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(text).map_err(|e| Error::Format(format!("base64: {e}")))?;
    let values = f32_from_le_bytes(&bytes)?;
    if values.len() != expected_len {
        return Err(Error::Format(format!("expected {expected_len} floats, found {}", values.len())));
    }
    Ok(values)
}

/// Rounds every entry to the nearest float32, so in-memory values match
/// what a float32 file would hold.
pub fn round_to_f32(v: &Vector) -> Vector {
    v.map(|x| x as f32 as f64)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn vector_fingerprint(v: &Vector) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    sha256_hex(&bytes)
}
