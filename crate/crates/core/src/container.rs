//! Shared framing for the float64 containers (SH coefficients, masks):
//! a 5-byte magic line, one line of JSON header, then little-endian f64 payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn encode<H: Serialize>(magic: &[u8], header: &H, payload: impl Iterator<Item = f64>) -> Vec<u8> {
    let json = serde_json::to_string(header).expect("header serializes");
    let mut out = Vec::with_capacity(magic.len() + json.len() + 1);
    out.extend_from_slice(magic);
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns the parsed header, the payload values and the payload byte offset.
pub(crate) fn decode<H: DeserializeOwned>(magic: &[u8], bytes: &[u8], path: &Path) -> Result<(H, Vec<f64>, usize)> {
    let header_err = |offset: usize, reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if !bytes.starts_with(magic) {
        let name = String::from_utf8_lossy(&magic[..magic.len() - 1]).into_owned();
        return Err(header_err(0, format!("missing {name} magic")));
    }
    let start = magic.len();
    let len = bytes[start..]
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| header_err(start, "unterminated header line".into()))?;
    let header: H = serde_json::from_slice(&bytes[start..start + len])
        .map_err(|e| header_err(start + e.column().saturating_sub(1), e.to_string()))?;
    let payload_start = start + len + 1;
    let payload = &bytes[payload_start..];
    if payload.len() % 8 != 0 {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            offset: payload_start as u64,
            expected: (payload.len() / 8 * 8) as u64,
            got: payload.len() as u64,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, values, payload_start))
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn check_payload(path: &Path, offset: usize, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            offset: offset as u64,
            expected: expected as u64 * 8,
            got: got as u64 * 8,
        });
    }
    Ok(())
}

pub(crate) fn fingerprint_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

pub(crate) fn parse_fingerprint(s: &str, path: &Path) -> Result<u64> {
    u64::from_str_radix(s, 16).map_err(|_| Error::MalformedHeader {
        path: path.to_path_buf(),
        offset: 0,
        reason: format!("bad grid fingerprint {s:?}"),
    })
}
