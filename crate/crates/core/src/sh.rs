//! Complex spherical harmonics on sampled spheres.
//!
//! # Conventions
//!
//! Every SH quantity in this crate uses one convention:
//!
//! * complex orthonormal harmonics, `∫ Y_n^m conj(Y_n'^m') dΩ = δ_nn' δ_mm'`,
//! * Condon–Shortley phase, so `Y_1^1(θ, φ) = -sqrt(3/8π) sin θ e^{iφ}`,
//! * ACN flat ordering, `i = n² + n + m`,
//! * colatitude `θ ∈ [0, π]` from +z, azimuth `φ ∈ [0, 2π)` counter-clockwise
//!   from +x (front) towards +y (left).
//!
//! A coefficient vector `c` synthesizes the directional function
//! `f(Ω) = Σ_i c_i Y_i(Ω)` (no conjugation on the coefficients), which makes the
//! least-squares analysis `c = Y⁺ f` with `Y[q, i] = Y_i(Ω_q)`. The forward
//! transform of a plane-wave density is `a_i = ∫ a(Ω) conj(Y_i(Ω)) dΩ`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lebedev;
use crate::solver::ShHrtf;

/// Largest order supported by the transforms.
pub const MAX_ORDER: usize = 16;

/// Relative singular-value threshold below which the basis counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Relative tolerance for grid weights summing to 4π.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Number of coefficients of an order-`order` expansion.
pub fn num_coeffs(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// A point on the unit sphere. Serialized as `[colatitude_deg, azimuth_deg]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Direction {
    colatitude: f64,
    azimuth: f64,
}

impl Direction {
    /// Build a direction from radians; the azimuth is wrapped into `[0, 2π)`.
    pub fn new(colatitude: f64, azimuth: f64) -> Result<Self> {
        if !colatitude.is_finite() || !azimuth.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "non-finite direction ({colatitude}, {azimuth})"
            )));
        }
        // allow a few ulps of slack from degree conversions
        let slack = 1e-12;
        if !(-slack..=PI + slack).contains(&colatitude) {
            return Err(Error::InvalidGrid(format!(
                "colatitude {colatitude} outside [0, π]"
            )));
        }
        Ok(Self {
            colatitude: colatitude.clamp(0.0, PI),
            azimuth: wrap_azimuth(azimuth),
        })
    }

    pub fn from_degrees(colatitude_deg: f64, azimuth_deg: f64) -> Result<Self> {
        Self::new(colatitude_deg.to_radians(), azimuth_deg.to_radians())
    }

    /// Direction from azimuth and elevation (both radians, elevation up from the horizon).
    pub fn from_azimuth_elevation(azimuth: f64, elevation: f64) -> Result<Self> {
        Self::new(PI / 2.0 - elevation, azimuth)
    }

    /// Direction of a non-zero cartesian vector.
    pub fn from_cartesian(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = (x * x + y * y + z * z).sqrt();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "cannot take direction of ({x}, {y}, {z})"
            )));
        }
        let colatitude = (z / r).clamp(-1.0, 1.0).acos();
        let azimuth = if x == 0.0 && y == 0.0 { 0.0 } else { y.atan2(x) };
        Self::new(colatitude, azimuth)
    }

    pub fn colatitude(&self) -> f64 {
        self.colatitude
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        PI / 2.0 - self.colatitude
    }

    pub fn to_cartesian(&self) -> [f64; 3] {
        let (st, ct) = self.colatitude.sin_cos();
        let (sp, cp) = self.azimuth.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Mirror image across the median (x-z) plane: φ → −φ.
    pub fn mirrored(&self) -> Self {
        Self {
            colatitude: self.colatitude,
            azimuth: wrap_azimuth(-self.azimuth),
        }
    }
}

fn wrap_azimuth(azimuth: f64) -> f64 {
    let wrapped = azimuth.rem_euclid(2.0 * PI);
    if wrapped >= 2.0 * PI {
        0.0
    } else {
        wrapped
    }
}

impl TryFrom<[f64; 2]> for Direction {
    type Error = Error;

    fn try_from([colatitude_deg, azimuth_deg]: [f64; 2]) -> Result<Self> {
        Self::from_degrees(colatitude_deg, azimuth_deg)
    }
}

impl From<Direction> for [f64; 2] {
    fn from(d: Direction) -> Self {
        [d.colatitude.to_degrees(), d.azimuth.to_degrees()]
    }
}

/// Central angle between two directions, in `[0, π]`.
pub fn great_circle_distance(a: &Direction, b: &Direction) -> f64 {
    let pa = a.to_cartesian();
    let pb = b.to_cartesian();
    let dot = pa[0] * pb[0] + pa[1] * pb[1] + pa[2] * pb[2];
    let cross = [
        pa[1] * pb[2] - pa[2] * pb[1],
        pa[2] * pb[0] - pa[0] * pb[2],
        pa[0] * pb[1] - pa[1] * pb[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    sin.atan2(dot)
}

/// Ordered set of sampling directions with optional quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    directions: Vec<Direction>,
    weights: Option<Vec<f64>>,
}

impl SamplingGrid {
    pub fn new(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidGrid("grid has no directions".into()));
        }
        Ok(Self {
            directions,
            weights: None,
        })
    }

    /// Grid with quadrature weights; weights must be positive and sum to 4π.
    pub fn with_weights(directions: Vec<Direction>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != directions.len() {
            return Err(Error::InvalidGrid(format!(
                "{} weights for {} directions",
                weights.len(),
                directions.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-positive weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if ((sum - 4.0 * PI) / (4.0 * PI)).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidGrid(format!(
                "weights sum to {sum}, expected 4π"
            )));
        }
        let mut grid = Self::new(directions)?;
        grid.weights = Some(weights);
        Ok(grid)
    }

    /// Embedded Lebedev rule with the given number of points
    /// (6, 14, 26, 50, 110 or 2702).
    pub fn lebedev(points: usize) -> Result<Self> {
        lebedev::grid(points)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn without_weights(&self) -> Self {
        Self {
            directions: self.directions.clone(),
            weights: None,
        }
    }

    /// Stable 64-bit FNV-1a hash of the direction bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for d in &self.directions {
            for v in [d.colatitude, d.azimuth] {
                for byte in v.to_bits().to_le_bytes() {
                    hash ^= u64::from(byte);
                    hash = hash.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        hash
    }

    pub(crate) fn check_order(&self, order: usize) -> Result<()> {
        if order > MAX_ORDER {
            return Err(Error::InvalidConfig(format!(
                "order {order} above supported maximum {MAX_ORDER}"
            )));
        }
        let needed = num_coeffs(order);
        if self.len() < needed {
            return Err(Error::InsufficientDirections {
                order,
                needed,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Order/degree pair with its ACN flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShIndex {
    n: usize,
    m: i64,
}

impl ShIndex {
    pub fn new(n: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > n {
            return Err(Error::InvalidIndex { n, m });
        }
        Ok(Self { n, m })
    }

    pub fn from_acn(i: usize) -> Self {
        let n = (i as f64).sqrt() as usize;
        // guard against sqrt rounding for large i
        let n = if (n + 1) * (n + 1) <= i {
            n + 1
        } else if n * n > i {
            n - 1
        } else {
            n
        };
        let m = i as i64 - (n * n + n) as i64;
        Self { n, m }
    }

    pub fn acn(&self) -> usize {
        (self.n * self.n + self.n).wrapping_add_signed(self.m as isize)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> i64 {
        self.m
    }

    /// `(-1)^m`.
    pub fn parity(&self) -> f64 {
        if self.m % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// SH coefficient vector of a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShVector {
    order: usize,
    coefficients: Vec<Complex64>,
}

impl ShVector {
    pub fn new(order: usize, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != num_coeffs(order) {
            return Err(Error::Dimension(format!(
                "order {order} needs {} coefficients, got {}",
                num_coeffs(order),
                coefficients.len()
            )));
        }
        Ok(Self {
            order,
            coefficients,
        })
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            coefficients: vec![Complex64::new(0.0, 0.0); num_coeffs(order)],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        self.coefficients
    }
}

/// Fully normalized associated Legendre values `sqrt((2n+1)/4π (n-m)!/(n+m)!) P_n^m`
/// (Condon–Shortley phase included) for `0 ≤ m ≤ n ≤ order`, stored at `n(n+1)/2 + m`.
///
/// The recurrence runs on normalized quantities throughout so nothing overflows at
/// high order.
fn normalized_legendre(order: usize, cos_theta: f64, sin_theta: f64) -> Vec<f64> {
    let tri = |n: usize, m: usize| n * (n + 1) / 2 + m;
    let mut p = vec![0.0; tri(order, order) + 1];
    p[0] = 1.0 / (4.0 * PI).sqrt();
    for m in 1..=order {
        let mf = m as f64;
        p[tri(m, m)] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta * p[tri(m - 1, m - 1)];
    }
    for m in 0..order {
        p[tri(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * cos_theta * p[tri(m, m)];
    }
    for m in 0..=order {
        let mf = m as f64;
        for n in (m + 2)..=order {
            let nf = n as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                .sqrt();
            p[tri(n, m)] = a * (cos_theta * p[tri(n - 1, m)] - b * p[tri(n - 2, m)]);
        }
    }
    p
}

/// All harmonics up to `order` at one direction, in ACN order.
pub fn sh_all(order: usize, dir: &Direction) -> Vec<Complex64> {
    let (sin_theta, cos_theta) = dir.colatitude.sin_cos();
    let legendre = normalized_legendre(order, cos_theta, sin_theta);
    let mut out = vec![Complex64::new(0.0, 0.0); num_coeffs(order)];
    for n in 0..=order {
        for m in 0..=n {
            let value = Complex64::from_polar(legendre[n * (n + 1) / 2 + m], m as f64 * dir.azimuth);
            out[n * n + n + m] = value;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                out[n * n + n - m] = value.conj() * sign;
            }
        }
    }
    out
}

/// `Y_n^m(dir)`.
pub fn sh_eval(n: usize, m: i64, dir: &Direction) -> Result<Complex64> {
    let index = ShIndex::new(n, m)?;
    Ok(sh_all(n, dir)[index.acn()])
}

/// Basis matrix `Y[q, i] = Y_i(Ω_q)`, row-major.
#[derive(Debug, Clone)]
pub struct ShBasisMatrix {
    order: usize,
    rows: usize,
    grid_fingerprint: u64,
    entries: Vec<Complex64>,
}

impl ShBasisMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        num_coeffs(self.order)
    }

    pub fn grid_fingerprint(&self) -> u64 {
        self.grid_fingerprint
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn row(&self, q: usize) -> &[Complex64] {
        let cols = self.cols();
        &self.entries[q * cols..(q + 1) * cols]
    }

    pub fn get(&self, q: usize, i: usize) -> Complex64 {
        self.entries[q * self.cols() + i]
    }

    /// `out[q] = Σ_i Y[q, i] c[i]`.
    pub fn synthesize_into(&self, coeffs: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(coeffs.len(), self.cols());
        for (q, value) in out.iter_mut().enumerate() {
            *value = self
                .row(q)
                .iter()
                .zip(coeffs)
                .map(|(y, c)| y * c)
                .sum();
        }
    }

    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        self.synthesize_into(coeffs, &mut out);
        out
    }

    /// `out[i] = Σ_q conj(Y[q, i]) v[q]`.
    pub fn adjoint_into(&self, values: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (q, v) in values.iter().enumerate() {
            for (o, y) in out.iter_mut().zip(self.row(q)) {
                *o += y.conj() * v;
            }
        }
    }

    fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols(), &self.entries)
    }
}

pub fn build_basis(grid: &SamplingGrid, order: usize) -> Result<ShBasisMatrix> {
    if order > MAX_ORDER {
        return Err(Error::InvalidConfig(format!(
            "order {order} above supported maximum {MAX_ORDER}"
        )));
    }
    let entries = grid
        .directions()
        .iter()
        .flat_map(|d| sh_all(order, d))
        .collect();
    Ok(ShBasisMatrix {
        order,
        rows: grid.len(),
        grid_fingerprint: grid.fingerprint(),
        entries,
    })
}

/// Inverse transform: evaluate `coeffs` on every row of `basis`.
pub fn isht(coeffs: &ShVector, basis: &ShBasisMatrix) -> Result<Vec<Complex64>> {
    if coeffs.order != basis.order {
        return Err(Error::OrderMismatch {
            expected: basis.order,
            got: coeffs.order,
        });
    }
    Ok(basis.synthesize(&coeffs.coefficients))
}

/// Moore–Penrose pseudo-inverse of a basis matrix, `[(N+1)² × Q]` row-major.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    order: usize,
    rows: usize,
    cols: usize,
    condition: f64,
    grid_fingerprint: u64,
    entries: Vec<Complex64>,
}

impl PseudoInverse {
    /// SVD-based pseudo-inverse; fails when `σ_min < RANK_TOLERANCE · σ_max`.
    pub fn new(basis: &ShBasisMatrix) -> Result<Self> {
        let cols = basis.cols();
        if basis.rows < cols {
            return Err(Error::InsufficientDirections {
                order: basis.order,
                needed: cols,
                got: basis.rows,
            });
        }
        let svd = basis.to_matrix().svd(true, true);
        let sigma = &svd.singular_values;
        let s_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
        let s_min = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
        if !(s_max > 0.0) || s_min < RANK_TOLERANCE * s_max {
            return Err(Error::IllConditioned { condition });
        }
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut pinv = v_t.adjoint();
        for (j, s) in sigma.iter().enumerate() {
            pinv.column_mut(j).scale_mut(1.0 / s);
        }
        let pinv = pinv * u.adjoint();
        let mut entries = Vec::with_capacity(cols * basis.rows);
        for i in 0..cols {
            for q in 0..basis.rows {
                entries.push(pinv[(i, q)]);
            }
        }
        Ok(Self {
            order: basis.order,
            rows: cols,
            cols: basis.rows,
            condition,
            grid_fingerprint: basis.grid_fingerprint,
            entries,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// 2-norm condition number of the underlying basis.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn num_directions(&self) -> usize {
        self.cols
    }

    pub fn grid_fingerprint(&self) -> u64 {
        self.grid_fingerprint
    }

    pub fn apply_into(&self, values: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(values.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.entries[i * self.cols..(i + 1) * self.cols]
                .iter()
                .zip(values)
                .map(|(p, v)| p * v)
                .sum();
        }
    }

    pub fn apply(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        self.apply_into(values, &mut out);
        out
    }
}

/// Least-squares SH analysis of samples on `grid` (unweighted pseudo-inverse).
pub fn sht_ls(values: &[Complex64], grid: &SamplingGrid, order: usize) -> Result<ShVector> {
    if values.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} samples for a {}-direction grid",
            values.len(),
            grid.len()
        )));
    }
    grid.check_order(order)?;
    let pinv = PseudoInverse::new(&build_basis(grid, order)?)?;
    ShVector::new(order, pinv.apply(values))
}

/// SH coefficients of a unit plane wave arriving from `dir`:
/// `a_i = conj(Y_i(dir))`.
pub fn encode_plane_wave(dir: &Direction, order: usize) -> ShVector {
    let coefficients = sh_all(order, dir).into_iter().map(|y| y.conj()).collect();
    ShVector {
        order,
        coefficients,
    }
}

/// Ear signals `p = ã^H H` for one frequency bin, with `ã_nm = (-1)^m conj(a_{n,-m})`.
///
/// With the synthesis convention of this module `p_ear = Σ_nm (-1)^m a_{n,-m} H_nm`,
/// so a plane wave from `Ω₀` renders to the HRTF reconstruction at `Ω₀`.
pub fn render_binaural(
    ambisonics: &ShVector,
    hrtf: &ShHrtf,
    bin: usize,
) -> Result<(Complex64, Complex64)> {
    if ambisonics.order != hrtf.order() {
        return Err(Error::OrderMismatch {
            expected: hrtf.order(),
            got: ambisonics.order,
        });
    }
    if bin >= hrtf.num_bins() {
        return Err(Error::Dimension(format!(
            "bin {bin} out of range for {} bins",
            hrtf.num_bins()
        )));
    }
    let a = &ambisonics.coefficients;
    let mut ears = [Complex64::new(0.0, 0.0); 2];
    for (ear, p) in ears.iter_mut().enumerate() {
        let h = hrtf.bin_coeffs(bin, ear);
        for (i, h_i) in h.iter().enumerate() {
            let idx = ShIndex::from_acn(i);
            let mirrored = ShIndex {
                n: idx.n,
                m: -idx.m,
            };
            let a_tilde = a[mirrored.acn()].conj() * idx.parity();
            *p += a_tilde.conj() * h_i;
        }
    }
    Ok((ears[0], ears[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dir(theta: f64, phi: f64) -> Direction {
        Direction::new(theta, phi).unwrap()
    }

    #[test]
    fn constant_and_pole_values() {
        let y00 = sh_eval(0, 0, &dir(1.1, 2.3)).unwrap();
        assert_relative_eq!(y00.re, 0.282_094_791_773_878_1, epsilon = 1e-12);
        assert_eq!(y00.im, 0.0);
        let y10 = sh_eval(1, 0, &dir(0.0, 0.0)).unwrap();
        assert_relative_eq!(y10.re, 0.488_602_511_902_919_9, epsilon = 1e-12);
        let y11 = sh_eval(1, 1, &dir(PI / 2.0, 0.0)).unwrap();
        assert_relative_eq!(y11.re, -0.345_494_149_471_335_5, epsilon = 1e-12);
        assert!(y11.im.abs() < 1e-15);
    }

    #[test]
    fn invalid_degree_rejected() {
        assert!(matches!(
            sh_eval(1, 2, &dir(0.3, 0.3)),
            Err(Error::InvalidIndex { n: 1, m: 2 })
        ));
    }

    #[test]
    fn closed_form_order_two() {
        // Y_2^1 = -sqrt(15/8π) sinθ cosθ e^{iφ}, Y_2^2 = 1/4 sqrt(15/2π) sin²θ e^{2iφ}
        let (t, p) = (0.7, 1.9);
        let d = dir(t, p);
        let y21 = sh_eval(2, 1, &d).unwrap();
        let expect21 = Complex64::from_polar(-(15.0 / (8.0 * PI)).sqrt() * t.sin() * t.cos(), p);
        assert!((y21 - expect21).norm() < 1e-13);
        let y22 = sh_eval(2, 2, &d).unwrap();
        let expect22 =
            Complex64::from_polar(0.25 * (15.0 / (2.0 * PI)).sqrt() * t.sin().powi(2), 2.0 * p);
        assert!((y22 - expect22).norm() < 1e-13);
        let y20 = sh_eval(2, 0, &d).unwrap();
        let expect20 = 0.25 * (5.0 / PI).sqrt() * (3.0 * t.cos().powi(2) - 1.0);
        assert!((y20.re - expect20).abs() < 1e-13);
    }

    #[test]
    fn acn_bijection() {
        for i in 0..num_coeffs(MAX_ORDER) {
            let idx = ShIndex::from_acn(i);
            assert_eq!(idx.acn(), i);
            assert!(idx.degree().unsigned_abs() as usize <= idx.order());
        }
        assert_eq!(ShIndex::new(2, -2).unwrap().acn(), 4);
        assert_eq!(ShIndex::new(1, 1).unwrap().acn(), 3);
    }

    #[test]
    fn great_circle_examples() {
        let a = dir(PI / 2.0, 0.0);
        assert_eq!(great_circle_distance(&a, &a), 0.0);
        assert_relative_eq!(great_circle_distance(&a, &dir(PI / 2.0, PI)), PI, epsilon = 1e-15);
        assert_relative_eq!(
            great_circle_distance(&a, &dir(PI / 2.0, PI / 2.0)),
            PI / 2.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(great_circle_distance(&dir(0.0, 0.0), &dir(PI, 1.0)), PI, epsilon = 1e-15);
    }

    #[test]
    fn azimuth_is_wrapped() {
        let d = Direction::new(1.0, -0.5).unwrap();
        assert_relative_eq!(d.azimuth(), 2.0 * PI - 0.5);
        assert!(Direction::new(-0.1, 0.0).is_err());
        assert!(Direction::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn single_direction_basis() {
        let grid = SamplingGrid::new(vec![dir(0.4, 0.4)]).unwrap();
        let basis = build_basis(&grid, 0).unwrap();
        assert_eq!((basis.rows(), basis.cols()), (1, 1));
        assert_relative_eq!(basis.get(0, 0).re, 0.282_094_791_773_878_1, epsilon = 1e-12);
    }

    #[test]
    fn weighted_gram_is_identity_on_lebedev_grids() {
        // (rule size, highest order integrated exactly by the product Y Y*)
        for (points, order) in [(6, 1), (14, 2), (26, 3), (50, 5), (110, 8), (2702, 16)] {
            let grid = SamplingGrid::lebedev(points).unwrap();
            let weights = grid.weights().unwrap().to_vec();
            let basis = build_basis(&grid, order).unwrap();
            let cols = basis.cols();
            for i in 0..cols {
                for j in 0..cols {
                    let g: Complex64 = (0..grid.len())
                        .map(|q| basis.get(q, i).conj() * basis.get(q, j) * weights[q])
                        .sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (g - expect).norm() < 1e-8,
                        "grid {points}, ({i}, {j}): {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn dc_field_round_trip() {
        let grid = SamplingGrid::lebedev(26).unwrap();
        let basis = build_basis(&grid, 1).unwrap();
        let mut c = vec![Complex64::new(0.0, 0.0); 4];
        c[0] = Complex64::new((4.0 * PI).sqrt(), 0.0);
        let values = isht(&ShVector::new(1, c).unwrap(), &basis).unwrap();
        for v in &values {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
        let zeros = isht(&ShVector::zeros(1), &basis).unwrap();
        assert!(zeros.iter().all(|v| v.norm() == 0.0));

        let constant = vec![Complex64::new(0.3, -0.2); grid.len()];
        let fit = sht_ls(&constant, &grid, 1).unwrap();
        let expect = Complex64::new(0.3, -0.2) * (4.0 * PI).sqrt();
        assert!((fit.coefficients()[0] - expect).norm() < 1e-12);
        assert!(fit.coefficients()[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let d = dir(0.5, 0.5);
        let grid = SamplingGrid::new(vec![d; 6]).unwrap();
        let values = vec![Complex64::new(1.0, 0.0); 6];
        assert!(matches!(
            sht_ls(&values, &grid, 1),
            Err(Error::IllConditioned { .. })
        ));
        let small = SamplingGrid::new(vec![d, dir(1.0, 1.0)]).unwrap();
        assert!(matches!(
            sht_ls(&values[..2], &small, 1),
            Err(Error::InsufficientDirections { needed: 4, got: 2, .. })
        ));
    }

    #[test]
    fn order_mismatch_in_isht() {
        let grid = SamplingGrid::lebedev(14).unwrap();
        let basis = build_basis(&grid, 1).unwrap();
        assert!(matches!(
            isht(&ShVector::zeros(2), &basis),
            Err(Error::OrderMismatch { expected: 1, got: 2 })
        ));
    }

    fn arb_direction() -> impl Strategy<Value = Direction> {
        (0.0..=PI, 0.0..(2.0 * PI)).prop_map(|(t, p)| dir(t, p))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn conjugate_symmetry(d in arb_direction()) {
            let y = sh_all(8, &d);
            for n in 0..=8usize {
                for m in -(n as i64)..=(n as i64) {
                    let pos = ShIndex::new(n, m).unwrap();
                    let neg = ShIndex::new(n, -m).unwrap();
                    let expect = y[pos.acn()].conj() * pos.parity();
                    prop_assert!((y[neg.acn()] - expect).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn isht_is_linear(
            a in proptest::collection::vec(-1.0..1.0f64, 8),
            b in proptest::collection::vec(-1.0..1.0f64, 8),
            alpha in -3.0..3.0f64,
            beta in -3.0..3.0f64,
        ) {
            let grid = SamplingGrid::lebedev(26).unwrap();
            let basis = build_basis(&grid, 1).unwrap();
            let to_c = |v: &[f64]| -> Vec<Complex64> {
                v.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect()
            };
            let (x, y) = (to_c(&a), to_c(&b));
            let mix: Vec<Complex64> = x.iter().zip(&y).map(|(x, y)| x * alpha + y * beta).collect();
            let lhs = basis.synthesize(&mix);
            let fx = basis.synthesize(&x);
            let fy = basis.synthesize(&y);
            for q in 0..grid.len() {
                let rhs = fx[q] * alpha + fy[q] * beta;
                prop_assert!((lhs[q] - rhs).norm() < 1e-13);
            }
        }
    }
}
