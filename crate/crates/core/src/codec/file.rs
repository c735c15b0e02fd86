//! `RVQ1` codebook container: magic, nine little-endian `u32` header
//! fields (Q, K, dim, sample rate, FFT size, hop, mel bands, fmin, fmax),
//! `Q·K·dim` little-endian `f32` codewords, then the SHA-256 of everything
//! before it.

use std::path::Path;

use ndarray::Array3;
use sha2::{Digest, Sha256};

use super::frontend::FrontendConfig;
use super::rvq::RvqCodebooks;
use super::{CodecError, Result};

pub const MAGIC: &[u8; 4] = b"RVQ1";
const HEADER_FIELDS: usize = 9;
const HASH_LEN: usize = 32;

fn header_len() -> usize {
    MAGIC.len() + 4 * HEADER_FIELDS
}

/// Serialized bytes including the trailing hash.
pub fn to_bytes(cb: &RvqCodebooks) -> Vec<u8> {
    let fe = cb.frontend();
    let fields = [
        cb.levels(),
        cb.size(),
        cb.dim(),
        fe.sample_rate as usize,
        fe.fft_size,
        fe.hop,
        fe.n_mels,
        fe.fmin_hz as usize,
        fe.fmax_hz as usize,
    ];
    let mut out = Vec::with_capacity(header_len() + 4 * cb.codewords().len() + HASH_LEN);
    out.extend_from_slice(MAGIC);
    for f in fields {
        out.extend_from_slice(&(f as u32).to_le_bytes());
    }
    for &v in cb.codewords().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let hash = Sha256::digest(&out);
    out.extend_from_slice(hash.as_slice());
    out
}

/// Hex SHA-256 of the serialized codebooks (the trailing hash field).
pub fn content_hash(cb: &RvqCodebooks) -> String {
    let bytes = to_bytes(cb);
    bytes[bytes.len() - HASH_LEN..].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_bytes(bytes: &[u8]) -> Result<RvqCodebooks> {
    let corrupt = |m: &str| CodecError::CorruptCodebook(m.to_string());
    if bytes.len() < header_len() + HASH_LEN {
        return Err(corrupt("file too short"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let field = |i: usize| {
        let o = 4 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4-byte slice")) as usize
    };
    let (q, k, dim) = (field(0), field(1), field(2));
    let count = q
        .checked_mul(k)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| corrupt("codebook dimensions overflow"))?;
    let body_end = header_len() + 4 * count;
    if bytes.len() != body_end + HASH_LEN {
        return Err(corrupt(&format!(
            "expected {} bytes for {q}×{k}×{dim}, found {}",
            body_end + HASH_LEN,
            bytes.len()
        )));
    }
    let digest = Sha256::digest(&bytes[..body_end]);
    if digest.as_slice() != &bytes[body_end..] {
        return Err(CodecError::HashMismatch);
    }
    let frontend = FrontendConfig {
        sample_rate: field(3) as u32,
        fft_size: field(4),
        hop: field(5),
        n_mels: field(6),
        fmin_hz: field(7) as u32,
        fmax_hz: field(8) as u32,
    };
    let values: Vec<f64> = bytes[header_len()..body_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect();
    let codewords = Array3::from_shape_vec((q, k, dim), values).map_err(|e| corrupt(&e.to_string()))?;
    RvqCodebooks::new(codewords, frontend)
}

pub fn save(cb: &RvqCodebooks, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(cb)).map_err(|source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<RvqCodebooks> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}
