//! Octave smoothing and the spectro-spatial notch mask.
//!
//! For every (direction, ear) spectrum the ratio `R(f) = |h_s(f)|² / |h(f)|²`
//! between the octave-smoothed and the raw magnitude exceeds one inside
//! spectral notches. The `k` largest local maxima of `R` inside the frequency
//! gate seed bands that extend to the nearest bins with `R ≤ 1`. Inside the
//! bands the mask is `min(R, clip)`, elsewhere it is one. Spectra seen from
//! within `contra_angle` of the opposite ear are left unmasked.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::hrtf::{select_plane, Ear, FrequencyGrid, HrtfSet, Plane, PLANE_TOLERANCE_DEG};
use crate::sh::{great_circle_distance, Direction, SamplingGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Number of peaks kept per spectrum.
    pub k: usize,
    /// Ceiling applied to mask values.
    pub clip: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    /// Exclusion radius (radians) around the opposite ear.
    pub contra_angle: f64,
    /// Ear directions `[left, right]`.
    pub ear_directions: [Direction; 2],
    /// Smoothing window width in octaves.
    pub smoothing_octaves: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        let ear = |az: f64| Direction::from_azimuth_elevation(az.to_radians(), 0.0).expect("finite");
        Self {
            k: 4,
            clip: 4.0,
            f_lo: 4000.0,
            f_hi: 20000.0,
            contra_angle: PI / 3.0,
            ear_directions: [ear(100.0), ear(-100.0)],
            smoothing_octaves: 1.0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self, freq: &FrequencyGrid) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.clip >= 1.0) || !self.clip.is_finite() {
            return bad(format!("clip {} must be a finite value >= 1", self.clip));
        }
        if !(self.f_lo > 0.0 && self.f_lo < self.f_hi && self.f_hi <= freq.nyquist()) {
            return bad(format!(
                "need 0 < f_lo < f_hi <= {} Hz, got {} and {}",
                freq.nyquist(),
                self.f_lo,
                self.f_hi
            ));
        }
        if !(0.0..=PI).contains(&self.contra_angle) {
            return bad(format!("contra_angle {} outside [0, π]", self.contra_angle));
        }
        if !(self.smoothing_octaves > 0.0) || !self.smoothing_octaves.is_finite() {
            return bad(format!("smoothing width {} must be positive", self.smoothing_octaves));
        }
        Ok(())
    }

    pub fn ear_direction(&self, ear: Ear) -> Direction {
        self.ear_directions[ear.index()]
    }
}

/// Inclusive bin range `[lo, hi]` covered by a window of `fraction` octaves around bin `j`.
fn window(j: usize, fraction: f64, bins: usize) -> (usize, usize) {
    if j == 0 {
        return (0, 0);
    }
    let half = 2f64.powf(fraction / 2.0);
    let lo = (j as f64 / half - 1e-9).ceil().max(0.0) as usize;
    let hi = ((j as f64 * half + 1e-9).floor() as usize).min(bins - 1);
    (lo, hi)
}

/// Power-domain fractional-octave smoothing: `out(f)² = mean |in|²` over the bins
/// in `[f 2^(-fraction/2), f 2^(fraction/2)]`, truncated at the spectrum edges.
pub fn octave_smooth(magnitude: &[f64], freq: &FrequencyGrid, fraction: f64) -> Result<Vec<f64>> {
    if magnitude.len() != freq.len() {
        return Err(Error::Dimension(format!(
            "{} magnitudes for {} bins",
            magnitude.len(),
            freq.len()
        )));
    }
    if !(fraction > 0.0) || !fraction.is_finite() {
        return Err(Error::InvalidConfig(format!("smoothing width {fraction} must be positive")));
    }
    if let Some(v) = magnitude.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("magnitude {v} is not a finite non-negative value")));
    }
    Ok(smooth_unchecked(magnitude, fraction))
}

fn smooth_unchecked(magnitude: &[f64], fraction: f64) -> Vec<f64> {
    let bins = magnitude.len();
    (0..bins)
        .map(|j| {
            let (lo, hi) = window(j, fraction, bins);
            let power: f64 = magnitude[lo..=hi].iter().map(|m| m * m).sum();
            (power / (hi - lo + 1) as f64).sqrt()
        })
        .collect()
}

/// Mask of one spectrum, given the smoothing ratio and the gate `[gate_lo, gate_hi]` (bins).
fn mask_spectrum(ratio: &[f64], gate_lo: usize, gate_hi: usize, k: usize, clip: f64) -> Vec<f64> {
    let bins = ratio.len();
    let mut out = vec![1.0; bins];
    if gate_lo > gate_hi {
        return out;
    }
    // local maxima of R over the whole spectrum; plateaus are represented by their lowest bin
    let mut peaks: Vec<usize> = Vec::new();
    let mut j = 0;
    while j < bins {
        let mut end = j;
        while end + 1 < bins && ratio[end + 1] == ratio[j] {
            end += 1;
        }
        let left_lower = j == 0 || ratio[j - 1] < ratio[j];
        let right_lower = end + 1 == bins || ratio[end + 1] < ratio[j];
        if left_lower && right_lower && ratio[j] > 1.0 && (gate_lo..=gate_hi).contains(&j) {
            peaks.push(j);
        }
        j = end + 1;
    }
    peaks.sort_by(|&a, &b| ratio[b].total_cmp(&ratio[a]).then(a.cmp(&b)));
    peaks.truncate(k);

    let mut bands: Vec<(usize, usize)> = peaks
        .iter()
        .map(|&p| {
            let mut lo = p;
            while lo > gate_lo && ratio[lo - 1] > 1.0 {
                lo -= 1;
            }
            let mut hi = p;
            while hi < gate_hi && ratio[hi + 1] > 1.0 {
                hi += 1;
            }
            (lo, hi)
        })
        .collect();
    bands.sort_unstable();
    for (lo, hi) in merge_bands(bands) {
        for j in lo..=hi {
            out[j] = ratio[j].min(clip).max(1.0);
        }
    }
    out
}

fn merge_bands(sorted: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(sorted.len());
    for (lo, hi) in sorted {
        match merged.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// `R = smooth² / raw²`, with `0/0 = 1` and `x/0 = ∞`.
fn smoothing_ratio(magnitude: &[f64], fraction: f64) -> Vec<f64> {
    let smooth = smooth_unchecked(magnitude, fraction);
    magnitude
        .iter()
        .zip(&smooth)
        .map(|(m, s)| {
            let (m2, s2) = (m * m, s * s);
            if m2 > 0.0 {
                s2 / m2
            } else if s2 > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        })
        .collect()
}

/// Bin indices with `f_lo ≤ f ≤ f_hi`, as an inclusive range (`lo > hi` when empty).
fn gate_bins(freq: &FrequencyGrid, f_lo: f64, f_hi: f64) -> (usize, usize) {
    let df = freq.sample_rate() / freq.n_fft() as f64;
    let lo = (f_lo / df).ceil() as usize;
    let hi = ((f_hi / df).floor() as usize).min(freq.len() - 1);
    (lo, hi)
}

/// Real mask values `M(Ω, ear, f)` on the grid of the HRTF set they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct NotchMask {
    grid: SamplingGrid,
    freq: FrequencyGrid,
    config: MaskConfig,
    values: Vec<f64>,
}

impl NotchMask {
    /// Mask of all ones.
    pub fn ones(grid: SamplingGrid, freq: FrequencyGrid, config: MaskConfig) -> Self {
        let values = vec![1.0; grid.len() * 2 * freq.len()];
        Self {
            grid,
            freq,
            config,
            values,
        }
    }

    pub fn from_values(grid: SamplingGrid, freq: FrequencyGrid, config: MaskConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * 2 * freq.len() {
            return Err(Error::Dimension(format!(
                "{} mask values for {} directions, 2 ears, {} bins",
                values.len(),
                grid.len(),
                freq.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let bins = freq.len();
            return Err(Error::NonFinite {
                location: format!("mask direction {}, ear {}, bin {}", i / (2 * bins), (i / bins) % 2, i % bins),
            });
        }
        Ok(Self {
            grid,
            freq,
            config,
            values,
        })
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn freq(&self) -> &FrequencyGrid {
        &self.freq
    }

    pub fn config(&self) -> &MaskConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, direction: usize, ear: Ear, bin: usize) -> f64 {
        self.values[(direction * 2 + ear.index()) * self.freq.len() + bin]
    }

    pub fn get_mut(&mut self, direction: usize, ear: Ear, bin: usize) -> &mut f64 {
        let bins = self.freq.len();
        &mut self.values[(direction * 2 + ear.index()) * bins + bin]
    }

    pub fn spectrum(&self, direction: usize, ear: Ear) -> &[f64] {
        let start = (direction * 2 + ear.index()) * self.freq.len();
        &self.values[start..start + self.freq.len()]
    }

    /// Maximal runs of bins with `M > 1` in one spectrum, as inclusive ranges.
    pub fn active_bands(&self, direction: usize, ear: Ear) -> Vec<(usize, usize)> {
        let spectrum = self.spectrum(direction, ear);
        let mut bands = Vec::new();
        let mut start = None;
        for (j, &v) in spectrum.iter().enumerate() {
            match (v > 1.0, start) {
                (true, None) => start = Some(j),
                (false, Some(s)) => {
                    bands.push((s, j - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            bands.push((s, spectrum.len() - 1));
        }
        bands
    }

    /// Fraction of entries with `M > 1`.
    pub fn active_fraction(&self) -> f64 {
        self.values.iter().filter(|v| **v > 1.0).count() as f64 / self.values.len() as f64
    }

    pub fn check_compatible(&self, hrtf: &HrtfSet) -> Result<()> {
        hrtf.check_compatible(&self.grid, &self.freq)
    }
}

/// Build the notch mask of every (direction, ear) spectrum of `hrtf`.
pub fn compute_mask(hrtf: &HrtfSet, cfg: &MaskConfig) -> Result<NotchMask> {
    let freq = *hrtf.freq();
    cfg.validate(&freq)?;
    let (gate_lo, gate_hi) = gate_bins(&freq, cfg.f_lo, cfg.f_hi);
    let grid = hrtf.grid();
    let spectra: Vec<Vec<f64>> = (0..grid.len() * 2)
        .into_par_iter()
        .map(|idx| {
            let (q, ear) = (idx / 2, if idx % 2 == 0 { Ear::Left } else { Ear::Right });
            let opposite = cfg.ear_direction(ear.other());
            if great_circle_distance(&grid.directions()[q], &opposite) <= cfg.contra_angle {
                return vec![1.0; freq.len()];
            }
            let magnitude: Vec<f64> = hrtf.spectrum(q, ear).iter().map(|v| v.norm()).collect();
            let ratio = smoothing_ratio(&magnitude, cfg.smoothing_octaves);
            mask_spectrum(&ratio, gate_lo, gate_hi, cfg.k, cfg.clip)
        })
        .collect();
    NotchMask::from_values(grid.clone(), freq, *cfg, spectra.concat())
}

/// Write one ear's mask on `plane` as `angle_deg,frequency_hz,mask_value`.
pub fn export_mask_csv(
    mask: &NotchMask,
    ear: Ear,
    plane: Plane,
    path: impl AsRef<Path>,
    comment: Option<&str>,
) -> Result<usize> {
    let path = path.as_ref();
    let points = select_plane(&mask.grid, plane);
    if points.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no grid directions within {PLANE_TOLERANCE_DEG}° of the {} plane",
            plane.name()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    writeln!(out, "angle_deg,frequency_hz,mask_value").map_err(io)?;
    let mut rows = 0;
    for p in &points {
        for (k, v) in mask.spectrum(p.direction, ear).iter().enumerate() {
            writeln!(out, "{},{},{}", p.angle_deg, mask.freq.frequency(k), v).map_err(io)?;
            rows += 1;
        }
    }
    out.flush().map_err(io)?;
    Ok(rows)
}

pub const MASK_MAGIC: &[u8] = b"MSK1\n";

#[derive(Debug, Serialize, Deserialize)]
struct MaskHeader {
    format: String,
    version: u32,
    num_directions: usize,
    num_bins: usize,
    sample_rate: f64,
    n_fft: usize,
    layout: String,
    grid_fingerprint: String,
    /// `[colatitude, azimuth]` in radians, exact.
    directions_rad: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    config: MaskConfig,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// Serialize as `MSK1\n{header}\n` followed by f64 LE values in `[direction][ear][bin]` order.
pub fn encode_mask(mask: &NotchMask, metadata: &serde_json::Value) -> Vec<u8> {
    let header = MaskHeader {
        format: "MSK".into(),
        version: 1,
        num_directions: mask.grid.len(),
        num_bins: mask.freq.len(),
        sample_rate: mask.freq.sample_rate(),
        n_fft: mask.freq.n_fft(),
        layout: "[direction][ear][bin] f64le".into(),
        grid_fingerprint: container::fingerprint_hex(mask.grid.fingerprint()),
        directions_rad: mask
            .grid
            .directions()
            .iter()
            .map(|d| [d.colatitude(), d.azimuth()])
            .collect(),
        weights: mask.grid.weights().map(<[f64]>::to_vec),
        config: mask.config,
        metadata: metadata.clone(),
    };
    container::encode(MASK_MAGIC, &header, mask.values.iter().copied())
}

pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<(NotchMask, serde_json::Value)> {
    let (header, values, offset): (MaskHeader, Vec<f64>, usize) = container::decode(MASK_MAGIC, bytes, path)?;
    let freq = FrequencyGrid::new(header.sample_rate, header.n_fft)?;
    if header.directions_rad.len() != header.num_directions || freq.len() != header.num_bins {
        return Err(Error::Dimension(format!(
            "{}: header dimensions are inconsistent",
            path.display()
        )));
    }
    let directions = header
        .directions_rad
        .iter()
        .map(|[c, a]| Direction::new(*c, *a))
        .collect::<Result<Vec<_>>>()?;
    let grid = match header.weights {
        Some(w) => SamplingGrid::with_weights(directions, w)?,
        None => SamplingGrid::new(directions)?,
    };
    if container::fingerprint_hex(grid.fingerprint()) != header.grid_fingerprint {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            offset: 0,
            reason: "grid fingerprint does not match the listed directions".into(),
        });
    }
    container::check_payload(path, offset, values.len(), header.num_directions * 2 * header.num_bins)?;
    Ok((NotchMask::from_values(grid, freq, header.config, values)?, header.metadata))
}

pub fn save_mask(mask: &NotchMask, path: impl AsRef<Path>, metadata: &serde_json::Value) -> Result<()> {
    container::write(path.as_ref(), &encode_mask(mask, metadata))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<(NotchMask, serde_json::Value)> {
    let path = path.as_ref();
    decode_mask(&container::read(path)?, path)
}
