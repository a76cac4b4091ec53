//! HRZ impulse-response container.
//!
//! Layout:
//!
//! ```text
//! HRZ1\n
//! {single-line JSON manifest}\n
//! f32 little-endian samples, [direction][ear][tap]
//! ```
//!
//! The manifest carries `sample_rate`, `num_directions`, `num_taps`, `ears`,
//! `directions_deg` (pairs of colatitude/azimuth in degrees), `sample_format`
//! and `layout`. Directions are written rounded to 1e-9 degrees so that
//! load/save cycles are byte-stable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HrirSet;
use crate::error::{Error, Result};
use crate::sh::{Direction, SamplingGrid};

pub const MAGIC: &[u8] = b"HRZ1\n";
const LAYOUT: &str = "direction-major [direction][ear][tap]";
const SAMPLE_FORMAT: &str = "f32le";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    sample_rate: f64,
    num_directions: usize,
    num_taps: usize,
    ears: Vec<String>,
    sample_format: String,
    layout: String,
    directions_deg: Vec<[f64; 2]>,
}

fn round_degrees(deg: f64) -> f64 {
    let r = (deg * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn encode(hrir: &HrirSet) -> Vec<u8> {
    let manifest = Manifest {
        format: "HRZ".into(),
        version: 1,
        sample_rate: hrir.sample_rate(),
        num_directions: hrir.num_directions(),
        num_taps: hrir.taps(),
        ears: vec!["left".into(), "right".into()],
        sample_format: SAMPLE_FORMAT.into(),
        layout: LAYOUT.into(),
        directions_deg: hrir
            .grid()
            .directions()
            .iter()
            .map(|d| {
                [
                    round_degrees(d.colatitude().to_degrees()),
                    round_degrees(d.azimuth().to_degrees()) % 360.0,
                ]
            })
            .collect(),
    };
    let json = serde_json::to_string(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + json.len() + 1 + hrir.samples().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for s in hrir.samples() {
        out.extend_from_slice(&(*s as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<HrirSet> {
    let header_err = |offset: usize, reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if !bytes.starts_with(MAGIC) {
        return Err(header_err(0, "missing HRZ1 magic".into()));
    }
    let json_start = MAGIC.len();
    let json_len = bytes[json_start..]
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| header_err(json_start, "unterminated manifest line".into()))?;
    let json = &bytes[json_start..json_start + json_len];
    let manifest: Manifest = serde_json::from_slice(json).map_err(|e| {
        header_err(json_start + e.column().saturating_sub(1), e.to_string())
    })?;
    if manifest.format != "HRZ" || manifest.version != 1 {
        return Err(header_err(
            json_start,
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    if manifest.sample_format != SAMPLE_FORMAT {
        return Err(header_err(
            json_start,
            format!("unsupported sample format {}", manifest.sample_format),
        ));
    }
    if manifest.ears != ["left", "right"] {
        return Err(header_err(json_start, format!("unsupported ear order {:?}", manifest.ears)));
    }
    if manifest.directions_deg.len() != manifest.num_directions {
        return Err(Error::Dimension(format!(
            "{}: manifest lists {} directions, num_directions = {}",
            path.display(),
            manifest.directions_deg.len(),
            manifest.num_directions
        )));
    }
    let directions = manifest
        .directions_deg
        .iter()
        .map(|[colat, az]| Direction::from_degrees(*colat, *az))
        .collect::<Result<Vec<_>>>()?;
    let grid = SamplingGrid::new(directions)?;

    let payload_start = json_start + json_len + 1;
    let payload = &bytes[payload_start..];
    let expected = manifest.num_directions as u64 * 2 * manifest.num_taps as u64 * 4;
    if payload.len() as u64 != expected {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            offset: payload_start as u64,
            expected,
            got: payload.len() as u64,
        });
    }
    let mut samples = Vec::with_capacity(payload.len() / 4);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            let taps = manifest.num_taps;
            return Err(Error::NonFinite {
                location: format!(
                    "{}: direction {}, ear {}, tap {} (byte {})",
                    path.display(),
                    i / (2 * taps),
                    if (i / taps) % 2 == 0 { "left" } else { "right" },
                    i % taps,
                    payload_start + 4 * i
                ),
            });
        }
        samples.push(f64::from(v));
    }
    HrirSet::new(manifest.sample_rate, manifest.num_taps, grid, samples)
}

pub fn load(path: &Path) -> Result<HrirSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn save(hrir: &HrirSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(hrir)).map_err(|e| Error::io(path, e))
}
