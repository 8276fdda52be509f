//! Binary container shared by network checkpoints and shallow model files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 8     | magic                                    |
//! | 4     | format version (`u32`, currently 1)      |
//! | 8     | header length `h` (`u64`)                |
//! | h     | UTF-8 JSON header                        |
//! | 8     | float count `n` (`u64`)                  |
//! | 8·n   | raw `f64` values                         |
//! | 4     | CRC32 (IEEE) of every preceding byte     |

use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn encode(magic: &[u8; 8], header: &str, floats: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + header.len() + floats.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(floats.len() as u64).to_le_bytes());
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(magic: &[u8; 8], bytes: &[u8]) -> Result<(String, Vec<f64>)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 8 + 4 + 8 + 8 + 4 {
        return Err(bad("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch (file truncated or corrupt)"));
    }
    if &body[..8] != magic {
        return Err(bad("wrong magic bytes"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let rest = &body[20..];
    if rest.len() < hlen + 8 {
        return Err(bad("header length out of range"));
    }
    let header = std::str::from_utf8(&rest[..hlen])
        .map_err(|_| bad("header is not UTF-8"))?
        .to_string();
    let rest = &rest[hlen..];
    let n = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() != n.checked_mul(8).ok_or_else(|| bad("float count overflow"))? {
        return Err(bad("float block length mismatch"));
    }
    let floats = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, floats))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
