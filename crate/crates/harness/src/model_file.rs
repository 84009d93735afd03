//! Binary model file.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `WIRM` |
//! | 4 | format version (u32, currently 1) |
//! | 4 | message_len (u32) |
//! | 4 | channels (u32) |
//! | 4 | side (u32) |
//! | 4 | filters (u32) |
//! | 4 | strength (f32) |
//! | 4 | init seed, low 32 bits (u32) |
//! | 4 | init seed, high 32 bits (u32) |
//! | 4 × weights | every tensor of `CodecConfig::tensor_layout`, in order, as f32 |
//! | 4 | CRC32 (IEEE) of all preceding bytes |

use std::path::Path;

use wirlab::codec::{CodecConfig, CodecParams};

use crate::error::{io_err, HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"WIRM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

fn u32_field(v: usize, name: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| HarnessError::InvalidConfig(format!("{name} = {v} does not fit in 32 bits")))
}

pub fn model_to_bytes(params: &CodecParams) -> Result<Vec<u8>> {
    let cfg = params.config();
    let strength = cfg.strength as f32;
    if f64::from(strength) != cfg.strength {
        return Err(HarnessError::InvalidConfig(format!(
            "strength {} is not exactly representable as f32; round it before training",
            cfg.strength
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.num_weights() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (v, name) in [
        (cfg.message_len, "message_len"),
        (cfg.channels, "channels"),
        (cfg.side, "side"),
        (cfg.filters, "filters"),
    ] {
        out.extend_from_slice(&u32_field(v, name)?.to_le_bytes());
    }
    out.extend_from_slice(&strength.to_le_bytes());
    out.extend_from_slice(&(cfg.seed as u32).to_le_bytes());
    out.extend_from_slice(&((cfg.seed >> 32) as u32).to_le_bytes());
    for w in params.tensors().iter().flatten() {
        // Stored weights are f32-exact by construction.
        out.extend_from_slice(&(*w as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<CodecParams> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(HarnessError::CorruptModel(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(HarnessError::CorruptModel("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = read_u32(tail, 0);
    if crc32fast::hash(body) != stored {
        return Err(HarnessError::CorruptModel("CRC mismatch".into()));
    }
    let version = read_u32(body, 4);
    if version != FORMAT_VERSION {
        return Err(HarnessError::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
    }
    let field = |i: usize| read_u32(body, 8 + 4 * i) as usize;
    let config = CodecConfig {
        message_len: field(0),
        channels: field(1),
        side: field(2),
        filters: field(3),
        strength: f64::from(f32::from_le_bytes(body[24..28].try_into().expect("4 bytes"))),
        seed: u64::from(read_u32(body, 28)) | (u64::from(read_u32(body, 32)) << 32),
    };
    config.validate().map_err(|e| HarnessError::CorruptModel(format!("header: {e}")))?;
    let weights = &body[HEADER_LEN..];
    let sizes: Vec<usize> = config.tensor_layout().iter().map(|(_, d)| d.iter().product()).collect();
    let expected: usize = sizes.iter().sum();
    if weights.len() != 4 * expected {
        return Err(HarnessError::CorruptModel(format!(
            "expected {expected} weights, found {} bytes",
            weights.len()
        )));
    }
    let mut values = weights.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))));
    let tensors = sizes.iter().map(|&n| values.by_ref().take(n).collect()).collect();
    Ok(CodecParams::from_tensors(config, tensors)?)
}

pub fn save_model(params: &CodecParams, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(params)?).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<CodecParams> {
    model_from_bytes(&std::fs::read(path).map_err(io_err(path))?)
}
