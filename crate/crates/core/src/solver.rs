//! Least-squares and magnitude-least-squares SH fits of HRTF sets.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::hrtf::{Ear, FrequencyGrid, HrtfSet};
use crate::sh::{build_basis, num_coeffs, PseudoInverse, SamplingGrid, ShBasisMatrix, ShIndex, ShVector};

/// Tag written into coefficient containers.
pub const CONVENTION: &str = "complex-orthonormal-condon-shortley-acn";

pub const DEFAULT_HEAD_RADIUS: f64 = 0.0803;
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Per-ear, per-bin SH coefficients, stored `[bin][ear][coefficient]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShHrtf {
    order: usize,
    freq: FrequencyGrid,
    grid: Option<GridTag>,
    coefficients: Vec<Complex64>,
}

/// Identity of the sampling grid a fit was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridTag {
    pub num_directions: usize,
    pub fingerprint: u64,
}

impl GridTag {
    pub fn of(grid: &SamplingGrid) -> Self {
        Self {
            num_directions: grid.len(),
            fingerprint: grid.fingerprint(),
        }
    }
}

impl ShHrtf {
    pub fn new(order: usize, freq: FrequencyGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        let expected = num_coeffs(order) * 2 * freq.len();
        if coefficients.len() != expected {
            return Err(Error::Dimension(format!(
                "{} coefficients for order {order}, 2 ears, {} bins",
                coefficients.len(),
                freq.len()
            )));
        }
        if coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite {
                location: "SH coefficient tensor".into(),
            });
        }
        Ok(Self {
            order,
            freq,
            grid: None,
            coefficients,
        })
    }

    pub fn zeros(order: usize, freq: FrequencyGrid) -> Self {
        Self {
            order,
            freq,
            grid: None,
            coefficients: vec![Complex64::new(0.0, 0.0); num_coeffs(order) * 2 * freq.len()],
        }
    }

    pub fn with_grid(mut self, grid: Option<GridTag>) -> Self {
        self.grid = grid;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_coeffs(&self) -> usize {
        num_coeffs(self.order)
    }

    pub fn num_bins(&self) -> usize {
        self.freq.len()
    }

    pub fn freq(&self) -> &FrequencyGrid {
        &self.freq
    }

    pub fn grid_tag(&self) -> Option<GridTag> {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    #[inline]
    fn offset(&self, bin: usize, ear: usize) -> usize {
        (bin * 2 + ear) * self.num_coeffs()
    }

    pub fn bin_coeffs(&self, bin: usize, ear: usize) -> &[Complex64] {
        let o = self.offset(bin, ear);
        &self.coefficients[o..o + self.num_coeffs()]
    }

    pub fn bin_coeffs_mut(&mut self, bin: usize, ear: usize) -> &mut [Complex64] {
        let o = self.offset(bin, ear);
        let n = self.num_coeffs();
        &mut self.coefficients[o..o + n]
    }

    /// Coefficient `i` (ACN) of `ear` at `bin`.
    pub fn get(&self, coeff: usize, ear: Ear, bin: usize) -> Complex64 {
        self.coefficients[self.offset(bin, ear.index()) + coeff]
    }

    pub fn sh_vector(&self, bin: usize, ear: Ear) -> ShVector {
        ShVector::new(self.order, self.bin_coeffs(bin, ear.index()).to_vec()).expect("length matches order")
    }

    /// Inverse transform onto `grid`.
    pub fn reconstruct(&self, grid: &SamplingGrid) -> Result<HrtfSet> {
        let basis = build_basis(grid, self.order)?;
        self.reconstruct_with(grid, &basis)
    }

    pub fn reconstruct_with(&self, grid: &SamplingGrid, basis: &ShBasisMatrix) -> Result<HrtfSet> {
        if basis.order() != self.order {
            return Err(Error::OrderMismatch {
                expected: self.order,
                got: basis.order(),
            });
        }
        if basis.rows() != grid.len() {
            return Err(Error::Dimension("basis rows differ from grid size".into()));
        }
        let bins = self.num_bins();
        let per_bin: Vec<[Vec<Complex64>; 2]> = (0..bins)
            .into_par_iter()
            .map(|k| [0, 1].map(|e| basis.synthesize(self.bin_coeffs(k, e))))
            .collect();
        HrtfSet::from_fn(grid.clone(), self.freq, |q, ear, k| per_bin[k][ear.index()][q])
    }

    /// Error unless this fit can be compared with `reference`.
    pub fn check_against(&self, reference: &HrtfSet) -> Result<()> {
        if self.freq != *reference.freq() {
            return Err(Error::GridMismatch(format!(
                "coefficients have {} bins at {} Hz, reference {} bins at {} Hz",
                self.num_bins(),
                self.freq.sample_rate(),
                reference.num_bins(),
                reference.freq().sample_rate()
            )));
        }
        if let Some(tag) = self.grid {
            if tag != GridTag::of(reference.grid()) {
                return Err(Error::GridMismatch(format!(
                    "coefficients were fitted on a {}-direction grid ({:016x}), reference has {} ({:016x})",
                    tag.num_directions,
                    tag.fingerprint,
                    reference.num_directions(),
                    reference.grid().fingerprint()
                )));
            }
        }
        Ok(())
    }
}

/// Cutoff below which an order-`order` representation is physically accurate:
/// `f_c = c N / (2π r)`.
pub fn cutoff_frequency(order: usize, radius: f64, speed_of_sound: f64) -> f64 {
    speed_of_sound * order as f64 / (2.0 * PI * radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transition {
    /// LS up to and including the last bin at or below `f_c`, MagLS above.
    Hard,
    /// Raised-cosine blend of LS and MagLS over `[f_c 2^-w, f_c]`.
    Crossfade { width_octaves: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub order: usize,
    pub head_radius: f64,
    pub speed_of_sound: f64,
    pub cutoff_override: Option<f64>,
    pub transition: Transition,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            order: 1,
            head_radius: DEFAULT_HEAD_RADIUS,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            cutoff_override: None,
            transition: Transition::Hard,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.head_radius > 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidConfig(
                "head radius and speed of sound must be positive".into(),
            ));
        }
        if let Some(fc) = self.cutoff_override {
            if !(fc >= 0.0) || !fc.is_finite() {
                return Err(Error::InvalidConfig(format!("invalid cutoff {fc}")));
            }
        }
        if let Transition::Crossfade { width_octaves } = self.transition {
            if !(width_octaves > 0.0 && width_octaves <= 2.0) {
                return Err(Error::InvalidConfig(format!(
                    "crossfade width {width_octaves} outside (0, 2] octaves"
                )));
            }
        }
        Ok(())
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_override
            .unwrap_or_else(|| cutoff_frequency(self.order, self.head_radius, self.speed_of_sound))
    }
}

/// Highest bin with `f ≤ cutoff` (bin 0 at least).
pub fn last_bin_at_or_below(freq: &FrequencyGrid, cutoff: f64) -> usize {
    (0..freq.len()).take_while(|&k| freq.frequency(k) <= cutoff).last().unwrap_or(0)
}

struct Fitter {
    basis: ShBasisMatrix,
    pinv: PseudoInverse,
}

impl Fitter {
    fn new(grid: &SamplingGrid, order: usize) -> Result<Self> {
        grid.check_order(order)?;
        let basis = build_basis(grid, order)?;
        let pinv = PseudoInverse::new(&basis)?;
        Ok(Self { basis, pinv })
    }

    fn ls_bin(&self, hrtf: &HrtfSet, bin: usize, ear: Ear) -> Vec<Complex64> {
        self.pinv.apply(&hrtf.spatial_slice(ear, bin))
    }

    /// One magnitude step: keep the reference magnitude, take the phase of `previous`.
    fn magls_bin(&self, hrtf: &HrtfSet, bin: usize, ear: Ear, previous: &[Complex64], real_bin: bool) -> Vec<Complex64> {
        let predicted = self.basis.synthesize(previous);
        let target: Vec<Complex64> = predicted
            .iter()
            .enumerate()
            .map(|(q, p)| {
                let magnitude = hrtf.get(q, ear, bin).norm();
                if real_bin {
                    Complex64::new(if p.re < 0.0 { -magnitude } else { magnitude }, 0.0)
                } else {
                    Complex64::from_polar(magnitude, p.arg())
                }
            })
            .collect();
        let mut c = self.pinv.apply(&target);
        if real_bin {
            make_real_field(&mut c);
        }
        c
    }
}

/// Project onto coefficients of real-valued functions: `c_{n,-m} = (-1)^m conj(c_{n,m})`.
fn make_real_field(c: &mut [Complex64]) {
    let original = c.to_vec();
    for (i, v) in c.iter_mut().enumerate() {
        let idx = ShIndex::from_acn(i);
        let mirror = ShIndex::new(idx.order(), -idx.degree()).expect("valid mirror").acn();
        *v = 0.5 * (original[i] + original[mirror].conj() * idx.parity());
    }
}

fn check_input(hrtf: &HrtfSet, order: usize) -> Result<()> {
    hrtf.grid().check_order(order)
}

/// Per-bin, per-ear least-squares fit `h_nm = Y⁺ h`.
pub fn solve_ls(hrtf: &HrtfSet, order: usize) -> Result<ShHrtf> {
    check_input(hrtf, order)?;
    let fitter = Fitter::new(hrtf.grid(), order)?;
    let bins = hrtf.num_bins();
    let per_bin: Vec<Vec<Complex64>> = (0..bins)
        .into_par_iter()
        .map(|k| {
            let mut v = fitter.ls_bin(hrtf, k, Ear::Left);
            v.extend(fitter.ls_bin(hrtf, k, Ear::Right));
            v
        })
        .collect();
    Ok(ShHrtf::new(order, *hrtf.freq(), per_bin.concat())?.with_grid(Some(GridTag::of(hrtf.grid()))))
}

/// Result of [`solve_magls`].
#[derive(Debug, Clone)]
pub struct MaglsSolution {
    pub coeffs: ShHrtf,
    pub cutoff_hz: f64,
    /// Last bin solved purely by LS.
    pub last_ls_bin: usize,
    /// Set when no bin lies above the cutoff, so the result is plain LS.
    pub ls_only: bool,
}

/// LS below the cutoff, phase-propagating magnitude fit above it.
pub fn solve_magls(hrtf: &HrtfSet, cfg: &SolverConfig) -> Result<MaglsSolution> {
    cfg.validate()?;
    check_input(hrtf, cfg.order)?;
    let freq = *hrtf.freq();
    let bins = freq.len();
    let cutoff_hz = cfg.cutoff_hz();
    let fc_bin = last_bin_at_or_below(&freq, cutoff_hz);
    let fitter = Fitter::new(hrtf.grid(), cfg.order)?;

    // blend weight of the magnitude solution per bin, 0 = LS
    let fade_start = match cfg.transition {
        Transition::Hard => cutoff_hz,
        Transition::Crossfade { width_octaves } => cutoff_hz * 2f64.powf(-width_octaves),
    };
    let weight = |k: usize| -> f64 {
        let f = freq.frequency(k);
        if k > fc_bin {
            1.0
        } else if f <= fade_start || matches!(cfg.transition, Transition::Hard) {
            0.0
        } else {
            let Transition::Crossfade { width_octaves } = cfg.transition else {
                unreachable!()
            };
            let t = ((f / fade_start).log2() / width_octaves).clamp(0.0, 1.0);
            0.5 * (1.0 - (PI * t).cos())
        }
    };
    let last_ls_bin = (0..bins).take_while(|&k| weight(k) == 0.0).last().unwrap_or(0);
    let ls_only = last_ls_bin + 1 >= bins;

    let solve_ear = |ear: Ear| -> Vec<Vec<Complex64>> {
        let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(bins);
        for k in 0..bins {
            let ls = fitter.ls_bin(hrtf, k, ear);
            let w = weight(k);
            if w == 0.0 || k == 0 {
                out.push(ls);
                continue;
            }
            let real_bin = k == bins - 1;
            let mag = fitter.magls_bin(hrtf, k, ear, &out[k - 1], real_bin);
            if w == 1.0 {
                out.push(mag);
            } else {
                out.push(ls.iter().zip(&mag).map(|(l, m)| l * (1.0 - w) + m * w).collect());
            }
        }
        out
    };
    let (left, right) = rayon::join(|| solve_ear(Ear::Left), || solve_ear(Ear::Right));
    let mut coefficients = Vec::with_capacity(bins * 2 * num_coeffs(cfg.order));
    for k in 0..bins {
        coefficients.extend_from_slice(&left[k]);
        coefficients.extend_from_slice(&right[k]);
    }
    let coeffs = ShHrtf::new(cfg.order, freq, coefficients)?.with_grid(Some(GridTag::of(hrtf.grid())));
    Ok(MaglsSolution {
        coeffs,
        cutoff_hz,
        last_ls_bin,
        ls_only,
    })
}

pub const SHC_MAGIC: &[u8] = b"SHC1\n";

#[derive(Debug, Serialize, Deserialize)]
struct ShcHeader {
    format: String,
    version: u32,
    convention: String,
    order: usize,
    num_bins: usize,
    sample_rate: f64,
    n_fft: usize,
    layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_directions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_fingerprint: Option<String>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// Serialize as `SHC1\n{header}\n` followed by interleaved `re, im` f64 LE values in
/// `[bin][ear][coefficient]` order.
pub fn encode_shc(coeffs: &ShHrtf, metadata: &serde_json::Value) -> Vec<u8> {
    let header = ShcHeader {
        format: "SHC".into(),
        version: 1,
        convention: CONVENTION.into(),
        order: coeffs.order,
        num_bins: coeffs.num_bins(),
        sample_rate: coeffs.freq.sample_rate(),
        n_fft: coeffs.freq.n_fft(),
        layout: "[bin][ear][coefficient] interleaved re,im f64le".into(),
        num_directions: coeffs.grid.map(|g| g.num_directions),
        grid_fingerprint: coeffs.grid.map(|g| container::fingerprint_hex(g.fingerprint)),
        metadata: metadata.clone(),
    };
    container::encode(
        SHC_MAGIC,
        &header,
        coeffs.coefficients.iter().flat_map(|c| [c.re, c.im]),
    )
}

pub fn decode_shc(bytes: &[u8], path: &Path) -> Result<(ShHrtf, serde_json::Value)> {
    let (header, values, offset): (ShcHeader, Vec<f64>, usize) = container::decode(SHC_MAGIC, bytes, path)?;
    if header.convention != CONVENTION {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            offset: SHC_MAGIC.len() as u64,
            reason: format!("unsupported SH convention {:?}", header.convention),
        });
    }
    let freq = FrequencyGrid::new(header.sample_rate, header.n_fft)?;
    if freq.len() != header.num_bins {
        return Err(Error::Dimension(format!(
            "{}: num_bins {} inconsistent with n_fft {}",
            path.display(),
            header.num_bins,
            header.n_fft
        )));
    }
    let expected = 2 * num_coeffs(header.order) * 2 * header.num_bins;
    container::check_payload(path, offset, values.len(), expected)?;
    let coefficients = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    let grid = match (header.num_directions, header.grid_fingerprint.as_deref()) {
        (Some(n), Some(fp)) => Some(GridTag {
            num_directions: n,
            fingerprint: container::parse_fingerprint(fp, path)?,
        }),
        _ => None,
    };
    Ok((ShHrtf::new(header.order, freq, coefficients)?.with_grid(grid), header.metadata))
}

pub fn save_shc(coeffs: &ShHrtf, path: impl AsRef<Path>, metadata: &serde_json::Value) -> Result<()> {
    container::write(path.as_ref(), &encode_shc(coeffs, metadata))
}

pub fn load_shc(path: impl AsRef<Path>) -> Result<(ShHrtf, serde_json::Value)> {
    let path = path.as_ref();
    decode_shc(&container::read(path)?, path)
}
