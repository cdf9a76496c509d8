//! Single-parameter checkpoint files (`.ltrj`).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "LTRJ"
//! version u16      1
//! L       u16      number of layers
//! dims    (L+1)×u32
//! payload per layer: W row-major then b, IEEE-754 f32
//! crc     u32      CRC-32 (IEEE) over all preceding bytes
//! ```
//!
//! The trailing CRC is always written; on read it is verified when present
//! and a file ending exactly at the payload is accepted.

use crate::error::{CliError, CliResult};
use ltrj_core::nn::{Architecture, Params};
use ltrj_core::Params32;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"LTRJ";
pub const VERSION: u16 = 1;

const CRC_TABLE: [u32; 256] = build_crc_table();

const fn build_crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = CRC_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

pub fn encode(params: &Params32) -> Vec<u8> {
    let arch = params.arch();
    let dims = arch.dims();
    let mut out = Vec::with_capacity(8 + dims.len() * 4 + params.num_entries() * 4 + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.depth() as u16).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for layer in &params.layers {
        for w in &layer.weight {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> CliResult<Params32> {
    let fail = |msg: String| CliError::usage(msg);
    if bytes.len() < 8 {
        return Err(fail(format!("checkpoint too short: {} bytes", bytes.len())));
    }
    if bytes[0..4] != MAGIC {
        return Err(fail(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[0..4],
            MAGIC
        )));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}, expected {VERSION}")));
    }
    let depth = u16::from_le_bytes(bytes[6..8].try_into().unwrap()) as usize;
    let header_len = 8 + (depth + 1) * 4;
    if bytes.len() < header_len {
        return Err(fail(format!(
            "checkpoint truncated in header: expected at least {header_len} bytes, got {}",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = (0..=depth)
        .map(|i| {
            u32::from_le_bytes(bytes[8 + i * 4..12 + i * 4].try_into().unwrap()) as usize
        })
        .collect();
    let arch = Architecture::new(dims.clone())
        .map_err(|e| fail(format!("invalid checkpoint dims {dims:?}: {e}")))?;
    let entries: usize = (1..dims.len()).map(|i| dims[i] * (dims[i - 1] + 1)).sum();
    let payload_len = entries * 4;
    let expected = header_len + payload_len;
    let trailing = bytes.len() as i64 - expected as i64;
    if trailing != 0 && trailing != 4 {
        return Err(fail(format!(
            "checkpoint size mismatch: expected {expected} bytes (or {} with CRC), got {}",
            expected + 4,
            bytes.len()
        )));
    }
    if trailing == 4 {
        let stored = u32::from_le_bytes(bytes[expected..expected + 4].try_into().unwrap());
        let actual = crc32(&bytes[..expected]);
        if stored != actual {
            return Err(fail(format!(
                "checkpoint CRC mismatch: stored {stored:#010x}, computed {actual:#010x}"
            )));
        }
    }

    let mut params = Params::<f32>::zeros(&arch);
    let mut off = header_len;
    for layer in &mut params.layers {
        for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *w = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            off += 4;
        }
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &Params32) -> CliResult<()> {
    std::fs::write(path, encode(params))
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
}

pub fn read_checkpoint(path: &Path) -> CliResult<Params32> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::usage(format!("reading {}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| e.with_context(&path.display().to_string()))
}
