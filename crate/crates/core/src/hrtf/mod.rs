//! HRIR/HRTF data sets, file formats and the rigid-sphere generator.

mod export;
mod fft;
pub mod hrz;
mod manifest;
mod sphere;

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::SamplingGrid;

pub use export::{export_spectra_csv, select_plane, Plane, PlanePoint, PLANE_TOLERANCE_DEG};
pub use fft::{to_frequency_domain, to_time_domain};
pub use manifest::load_csv_manifest;
pub use sphere::{synth_sphere_hrir, synth_sphere_hrtf, SphereHeadModel};

/// Ear channel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left = 0,
    Right = 1,
}

impl Ear {
    pub const BOTH: [Ear; 2] = [Ear::Left, Ear::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Ear {
        match self {
            Ear::Left => Ear::Right,
            Ear::Right => Ear::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ear::Left => "left",
            Ear::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Ear> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Some(Ear::Left),
            "right" | "r" => Some(Ear::Right),
            _ => None,
        }
    }
}

/// Positive-frequency bins of a real FFT: `f_k = k fs / n_fft`, `k = 0..=n_fft/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    sample_rate: f64,
    n_fft: usize,
}

impl FrequencyGrid {
    pub fn new(sample_rate: f64, n_fft: usize) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if n_fft < 2 || n_fft % 2 != 0 {
            return Err(Error::FftSize { n_fft, taps: 0 });
        }
        Ok(Self { sample_rate, n_fft })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn len(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate / 2.0
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate / self.n_fft as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.frequency(k)).collect()
    }
}

/// Time-domain impulse responses, `[direction][ear][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirSet {
    sample_rate: f64,
    taps: usize,
    grid: SamplingGrid,
    samples: Vec<f64>,
}

impl HrirSet {
    pub fn new(sample_rate: f64, taps: usize, grid: SamplingGrid, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if taps == 0 {
            return Err(Error::Dimension("impulse responses need at least one tap".into()));
        }
        let expected = grid.len() * 2 * taps;
        if samples.len() != expected {
            return Err(Error::Dimension(format!(
                "{} samples for {} directions x 2 ears x {taps} taps",
                samples.len(),
                grid.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            let (q, e, t) = (pos / (2 * taps), (pos / taps) % 2, pos % taps);
            return Err(Error::NonFinite {
                location: format!("direction {q}, ear {}, tap {t}", Ear::BOTH[e].name()),
            });
        }
        Ok(Self {
            sample_rate,
            taps,
            grid,
            samples,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn num_directions(&self) -> usize {
        self.grid.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn impulse_response(&self, direction: usize, ear: Ear) -> &[f64] {
        let start = (direction * 2 + ear.index()) * self.taps;
        &self.samples[start..start + self.taps]
    }
}

/// Container format accepted by [`load_hrir`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HrirFormat {
    /// Binary HRZ container, see [`hrz`].
    Container,
    /// CSV manifest with samples embedded per row.
    CsvManifest,
}

impl HrirFormat {
    /// Guess from the file extension (`.csv` → manifest, anything else → container).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => HrirFormat::CsvManifest,
            _ => HrirFormat::Container,
        }
    }
}

pub fn load_hrir(path: impl AsRef<Path>, format: HrirFormat) -> Result<HrirSet> {
    let path = path.as_ref();
    match format {
        HrirFormat::Container => hrz::load(path),
        HrirFormat::CsvManifest => load_csv_manifest(path),
    }
}

/// Complex transfer functions, `[direction][ear][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HrtfSet {
    grid: SamplingGrid,
    freq: FrequencyGrid,
    values: Vec<Complex64>,
}

impl HrtfSet {
    pub fn new(grid: SamplingGrid, freq: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        let expected = grid.len() * 2 * freq.len();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "{} values for {} directions x 2 ears x {} bins",
                values.len(),
                grid.len(),
                freq.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            let f = freq.len();
            return Err(Error::NonFinite {
                location: format!(
                    "direction {}, ear {}, bin {}",
                    pos / (2 * f),
                    Ear::BOTH[(pos / f) % 2].name(),
                    pos % f
                ),
            });
        }
        Ok(Self { grid, freq, values })
    }

    /// Build by evaluating `f(direction, ear, bin)`.
    pub fn from_fn(
        grid: SamplingGrid,
        freq: FrequencyGrid,
        mut f: impl FnMut(usize, Ear, usize) -> Complex64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * 2 * freq.len());
        for q in 0..grid.len() {
            for ear in Ear::BOTH {
                for k in 0..freq.len() {
                    values.push(f(q, ear, k));
                }
            }
        }
        Self::new(grid, freq, values)
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn freq(&self) -> &FrequencyGrid {
        &self.freq
    }

    pub fn num_directions(&self) -> usize {
        self.grid.len()
    }

    pub fn num_bins(&self) -> usize {
        self.freq.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, direction: usize, ear: Ear, bin: usize) -> usize {
        (direction * 2 + ear.index()) * self.freq.len() + bin
    }

    #[inline]
    pub fn get(&self, direction: usize, ear: Ear, bin: usize) -> Complex64 {
        self.values[self.index(direction, ear, bin)]
    }

    pub fn spectrum(&self, direction: usize, ear: Ear) -> &[Complex64] {
        let start = self.index(direction, ear, 0);
        &self.values[start..start + self.freq.len()]
    }

    /// Values over all directions for one ear and bin.
    pub fn spatial_slice(&self, ear: Ear, bin: usize) -> Vec<Complex64> {
        (0..self.grid.len()).map(|q| self.get(q, ear, bin)).collect()
    }

    pub fn map(&self, mut f: impl FnMut(usize, Ear, usize, Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for q in 0..self.grid.len() {
            for ear in Ear::BOTH {
                for k in 0..self.freq.len() {
                    let i = self.index(q, ear, k);
                    out.values[i] = f(q, ear, k, self.values[i]);
                }
            }
        }
        out
    }

    /// Error unless `other` shares this set's directions and frequency bins.
    pub fn check_compatible(&self, grid: &SamplingGrid, freq: &FrequencyGrid) -> Result<()> {
        if grid.len() != self.grid.len() || grid.fingerprint() != self.grid.fingerprint() {
            return Err(Error::GridMismatch(format!(
                "sampling grids differ ({} vs {} directions)",
                grid.len(),
                self.grid.len()
            )));
        }
        if freq != &self.freq {
            return Err(Error::GridMismatch(format!(
                "frequency grids differ ({} Hz/{} vs {} Hz/{})",
                freq.sample_rate(),
                freq.n_fft(),
                self.freq.sample_rate(),
                self.freq.n_fft()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh::Direction;

    #[test]
    fn frequency_grid_shape() {
        let f = FrequencyGrid::new(48000.0, 512).unwrap();
        assert_eq!(f.len(), 257);
        assert_eq!(f.frequency(0), 0.0);
        assert_eq!(f.frequency(256), 24000.0);
        let all = f.frequencies();
        assert!(all.windows(2).all(|w| w[1] > w[0]));
        assert!(FrequencyGrid::new(48000.0, 511).is_err());
        assert!(FrequencyGrid::new(0.0, 512).is_err());
    }

    #[test]
    fn hrir_rejects_nan_with_location() {
        let grid = SamplingGrid::new(vec![Direction::new(1.0, 0.0).unwrap()]).unwrap();
        let mut samples = vec![0.0; 8];
        samples[6] = f64::NAN;
        let err = HrirSet::new(48000.0, 4, grid, samples).unwrap_err();
        match err {
            Error::NonFinite { location } => assert_eq!(location, "direction 0, ear right, tap 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hrir_dimension_checks() {
        let grid = SamplingGrid::new(vec![Direction::new(1.0, 0.0).unwrap()]).unwrap();
        assert!(HrirSet::new(48000.0, 4, grid.clone(), vec![0.0; 7]).is_err());
        assert!(HrirSet::new(48000.0, 0, grid.clone(), vec![]).is_err());
        assert!(HrirSet::new(-1.0, 4, grid, vec![0.0; 8]).is_err());
    }
}
