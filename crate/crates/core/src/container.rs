//! Checksummed binary container for datasets and model snapshots.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic  "UQBC1\n"                         6 bytes
//! u64    header length in bytes
//! JSON   header: format_version, dtype, caller metadata, section table
//! f64[]  payload sections, back to back, in table order
//! ```
//!
//! The header's section table records each block's shape, byte extent, and
//! SHA-256 digest; `read` verifies every digest so silent corruption
//! surfaces as [`ContainerError::CorruptFile`] instead of garbage numbers.
//! Payload scalars are always `f64` on disk regardless of the in-memory
//! precision, which keeps files portable and makes `f64` round trips
//! bit-exact. Writing is deterministic: equal inputs produce equal bytes,
//! so rerunning a seeded pipeline can be validated by file digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 6] = b"UQBC1\n";
/// Bump on any incompatible layout change.
pub const FORMAT_VERSION: u32 = 1;
/// Headers beyond this are treated as corruption, not allocation requests.
const MAX_HEADER_BYTES: u64 = 64 << 20;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("file was written with format version {found}, reader supports {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },

    #[error("corrupt container: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn corrupt(msg: impl Into<String>) -> ContainerError {
    ContainerError::CorruptFile(msg.into())
}

/// Shape and integrity record for one payload block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: u64,
    pub len_bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    meta: serde_json::Value,
    sections: Vec<SectionInfo>,
}

/// One named `rows × cols` block of `f64` payload.
#[derive(Debug)]
pub struct Section {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Section {
    pub fn new(name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "section shape mismatch");
        Self {
            name: name.to_string(),
            rows,
            cols,
            data,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn section_bytes(data: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Serialize sections plus caller metadata to `path`.
pub fn write(
    path: &Path,
    meta: serde_json::Value,
    sections: &[Section],
) -> Result<(), ContainerError> {
    let mut infos = Vec::with_capacity(sections.len());
    let mut payload = Vec::new();
    for s in sections {
        let bytes = section_bytes(&s.data);
        infos.push(SectionInfo {
            name: s.name.clone(),
            rows: s.rows,
            cols: s.cols,
            offset: payload.len() as u64,
            len_bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        payload.extend_from_slice(&bytes);
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        dtype: "f64".to_string(),
        meta,
        sections: infos,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| corrupt(format!("header encoding: {e}")))?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    file.write_all(&payload)?;
    file.flush()?;
    Ok(())
}

/// Read and digest-verify a container; returns caller metadata and sections.
pub fn read(path: &Path) -> Result<(serde_json::Value, Vec<Section>), ContainerError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);

    let mut magic = [0u8; 6];
    file.read_exact(&mut magic)
        .map_err(|_| corrupt("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic — not a container file"));
    }

    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)
        .map_err(|_| corrupt("file too short for header length"))?;
    let header_len = u64::from_le_bytes(len_bytes);
    if header_len == 0 || header_len > MAX_HEADER_BYTES {
        return Err(corrupt(format!("implausible header length {header_len}")));
    }

    let mut header_json = vec![0u8; header_len as usize];
    file.read_exact(&mut header_json)
        .map_err(|_| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| corrupt(format!("header parse: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ContainerError::FormatVersionMismatch {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if header.dtype != "f64" {
        return Err(corrupt(format!("unsupported payload dtype {}", header.dtype)));
    }

    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;

    let mut sections = Vec::with_capacity(header.sections.len());
    for info in &header.sections {
        let start = info.offset as usize;
        let end = start
            .checked_add(info.len_bytes as usize)
            .ok_or_else(|| corrupt("section extent overflows"))?;
        if end > payload.len() {
            return Err(corrupt(format!(
                "section '{}' extends past end of file",
                info.name
            )));
        }
        let bytes = &payload[start..end];
        if sha256_hex(bytes) != info.sha256 {
            return Err(corrupt(format!("checksum mismatch in section '{}'", info.name)));
        }
        if info.len_bytes as usize != info.rows * info.cols * 8 {
            return Err(corrupt(format!(
                "section '{}' length disagrees with its shape",
                info.name
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        sections.push(Section {
            name: info.name.clone(),
            rows: info.rows,
            cols: info.cols,
            data,
        });
    }
    Ok((header.meta, sections))
}

/// Read only the caller metadata and section table (payload untouched,
/// digests unchecked) — cheap inspection of large files.
pub fn read_summary(
    path: &Path,
) -> Result<(serde_json::Value, Vec<SectionInfo>), ContainerError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 6];
    file.read_exact(&mut magic)
        .map_err(|_| corrupt("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic — not a container file"));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)
        .map_err(|_| corrupt("file too short for header length"))?;
    let header_len = u64::from_le_bytes(len_bytes);
    if header_len == 0 || header_len > MAX_HEADER_BYTES {
        return Err(corrupt(format!("implausible header length {header_len}")));
    }
    let mut header_json = vec![0u8; header_len as usize];
    file.read_exact(&mut header_json)
        .map_err(|_| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| corrupt(format!("header parse: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ContainerError::FormatVersionMismatch {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok((header.meta, header.sections))
}
