//! NMSE and magnitude error surfaces, with power-domain averaging.
//!
//! Entry-wise errors are ratios formed before the logarithm. Averages over
//! directions, ears or frequency are means of the linear power ratios,
//! converted to dB afterwards.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrtf::{Ear, FrequencyGrid, HrtfSet};
use crate::mask::NotchMask;
use crate::solver::ShHrtf;

/// Lower bound of every reported dB value.
pub const DB_FLOOR: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nmse,
    Mag,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Nmse => "nmse",
            Metric::Mag => "mag",
        }
    }
}

pub fn to_db(power_ratio: f64) -> f64 {
    if power_ratio > 0.0 {
        (10.0 * power_ratio.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Error in dB per (direction, ear, bin), `None` where `|h| = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSurface {
    metric: Metric,
    directions: usize,
    freq: FrequencyGrid,
    values: Vec<Option<f64>>,
}

impl ErrorSurface {
    pub fn new(metric: Metric, directions: usize, freq: FrequencyGrid, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != directions * 2 * freq.len() {
            return Err(Error::Dimension(format!(
                "{} surface values for {directions} directions, 2 ears, {} bins",
                values.len(),
                freq.len()
            )));
        }
        Ok(Self {
            metric,
            directions,
            freq,
            values,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn num_directions(&self) -> usize {
        self.directions
    }

    pub fn freq(&self) -> &FrequencyGrid {
        &self.freq
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, direction: usize, ear: Ear, bin: usize) -> Option<f64> {
        self.values[(direction * 2 + ear.index()) * self.freq.len() + bin]
    }

    /// Number of undefined entries.
    pub fn undefined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

fn surface(metric: Metric, estimate: &HrtfSet, reference: &HrtfSet) -> Result<ErrorSurface> {
    estimate.check_compatible(reference.grid(), reference.freq())?;
    let values = estimate
        .values()
        .iter()
        .zip(reference.values())
        .map(|(e, h)| {
            let power = h.norm_sqr();
            if power == 0.0 {
                return None;
            }
            let err = match metric {
                Metric::Nmse => (e - h).norm_sqr(),
                Metric::Mag => (e.norm() - h.norm()).powi(2),
            };
            Some(to_db(err / power))
        })
        .collect();
    ErrorSurface::new(metric, reference.num_directions(), *reference.freq(), values)
}

/// `10 log10(|ĥ − h|² / |h|²)` for an already reconstructed estimate.
pub fn nmse_values(estimate: &HrtfSet, reference: &HrtfSet) -> Result<ErrorSurface> {
    surface(Metric::Nmse, estimate, reference)
}

/// `10 log10((|ĥ| − |h|)² / |h|²)` for an already reconstructed estimate.
pub fn mag_error_values(estimate: &HrtfSet, reference: &HrtfSet) -> Result<ErrorSurface> {
    surface(Metric::Mag, estimate, reference)
}

/// NMSE of `candidate` reconstructed on the reference grid.
pub fn nmse(candidate: &ShHrtf, reference: &HrtfSet) -> Result<ErrorSurface> {
    candidate.check_against(reference)?;
    nmse_values(&candidate.reconstruct(reference.grid())?, reference)
}

/// Magnitude error of `candidate` reconstructed on the reference grid.
pub fn mag_error(candidate: &ShHrtf, reference: &HrtfSet) -> Result<ErrorSurface> {
    candidate.check_against(reference)?;
    mag_error_values(&candidate.reconstruct(reference.grid())?, reference)
}

/// Power mean of dB values, `None` for an empty input.
pub fn power_mean_db(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += from_db(v);
        n += 1;
    }
    (n > 0).then(|| to_db(sum / n as f64))
}

/// Per-bin power mean over all directions of `ears` (both ears when `None`).
///
/// Bins without any defined entry are NaN.
pub fn spatial_average(surface: &ErrorSurface, ears: Option<Ear>) -> Vec<f64> {
    let bins = surface.freq.len();
    let selected: Vec<Ear> = match ears {
        Some(e) => vec![e],
        None => Ear::BOTH.to_vec(),
    };
    (0..bins)
        .map(|k| {
            let vals = (0..surface.directions)
                .flat_map(|q| selected.iter().map(move |&e| (q, e)))
                .filter_map(|(q, e)| surface.get(q, e, k));
            power_mean_db(vals).unwrap_or(f64::NAN)
        })
        .collect()
}

/// Power mean of `curve` over bins with `lo ≤ f ≤ hi`, skipping NaN entries.
pub fn band_average(curve: &[f64], freq: &FrequencyGrid, lo: f64, hi: f64) -> Result<f64> {
    if curve.len() != freq.len() {
        return Err(Error::Dimension(format!("{} values for {} bins", curve.len(), freq.len())));
    }
    if !(lo <= hi) {
        return Err(Error::InvalidConfig(format!("band [{lo}, {hi}] Hz is empty")));
    }
    let vals = curve
        .iter()
        .enumerate()
        .filter(|(k, v)| (lo..=hi).contains(&freq.frequency(*k)) && !v.is_nan())
        .map(|(_, v)| *v);
    power_mean_db(vals).ok_or_else(|| Error::EmptySelection(format!("no bins between {lo} and {hi} Hz")))
}

/// Power mean over the entries where `mask > 1`.
pub fn masked_average(surface: &ErrorSurface, mask: &NotchMask) -> Result<f64> {
    if mask.values().len() != surface.values.len() {
        return Err(Error::Dimension("mask and error surface differ in size".into()));
    }
    let vals = surface
        .values
        .iter()
        .zip(mask.values())
        .filter(|(_, m)| **m > 1.0)
        .filter_map(|(v, _)| *v);
    power_mean_db(vals).ok_or_else(|| Error::EmptySelection("mask has no active entries".into()))
}

/// One per-bin curve for CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub method: String,
    pub metric: Metric,
    pub values: Vec<f64>,
}

/// Write `frequency_hz,value_db,metric,method`, one block per curve.
pub fn export_metrics_csv(curves: &[Curve], freq: &FrequencyGrid, path: impl AsRef<Path>, comment: Option<&str>) -> Result<usize> {
    let path = path.as_ref();
    if let Some(c) = curves.iter().find(|c| c.values.len() != freq.len()) {
        return Err(Error::Dimension(format!(
            "curve {} has {} values for {} bins",
            c.method,
            c.values.len(),
            freq.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    writeln!(out, "frequency_hz,value_db,metric,method").map_err(io)?;
    let mut rows = 0;
    for c in curves {
        for (k, v) in c.values.iter().enumerate() {
            writeln!(out, "{},{},{},{}", freq.frequency(k), v, c.metric.name(), c.method).map_err(io)?;
            rows += 1;
        }
    }
    out.flush().map_err(io)?;
    Ok(rows)
}
