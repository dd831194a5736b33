//! PEMB embedding files.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size  | field                          |
//! |--------|-------|--------------------------------|
//! | 0      | 6     | magic `PEMB1\n`                |
//! | 6      | 4     | u32 version, always 1          |
//! | 10     | 4     | u32 dimensionality `d`         |
//! | 14     | 8     | u64 row count `n`              |
//! | 22     | 4·n·d | f32 IEEE-754 values, row-major |
//!
//! An optional sidecar with the `.ids` extension holds one UTF-8 identifier
//! per row, newline separated.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"PEMB1\n";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PembHeader {
    pub dim: usize,
    pub rows: usize,
}

impl PembHeader {
    pub fn payload_len(&self) -> u64 {
        self.rows as u64 * self.dim as u64 * 4
    }
}

fn parse_header(bytes: &[u8]) -> Result<PembHeader> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedHeader(bytes.len()));
    }
    let version = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let rows = u64::from_le_bytes(bytes[14..22].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::ZeroDim);
    }
    Ok(PembHeader { dim, rows })
}

pub fn encode(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data().len() * 4);
    write_header(&mut out, m.dim(), m.rows());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn write_header(out: &mut Vec<u8>, dim: usize, rows: usize) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let header = parse_header(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.payload_len();
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { extra: found - expected });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(header.rows, header.dim, data)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(m))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads only the header and checks the file length against it.
pub fn read_header(path: impl AsRef<Path>) -> Result<PembHeader> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    Read::by_ref(&mut file)
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    let header = parse_header(&buf)?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let found = len.saturating_sub(HEADER_LEN as u64);
    let expected = header.payload_len();
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { extra: found - expected });
    }
    Ok(header)
}

pub fn ids_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("ids")
}

pub fn save_ids<S: AsRef<str>>(path: impl AsRef<Path>, ids: &[S]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for id in ids {
        text.push_str(id.as_ref());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads an id sidecar and checks it has exactly `rows` entries.
pub fn load_ids(path: impl AsRef<Path>, rows: usize) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ids: Vec<String> = text.lines().map(str::to_owned).collect();
    if ids.len() != rows {
        return Err(Error::IdCountMismatch { expected: rows, found: ids.len() });
    }
    Ok(ids)
}
