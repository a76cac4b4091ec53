//! Analytic HRTFs of a rigid sphere.
//!
//! Surface pressure on a rigid sphere of radius `a` for a unit plane wave arriving
//! from `ŝ`, observed at the ear point `ê` (time convention `e^{+iωt}`, matching the
//! forward DFT):
//!
//! ```text
//! p = Σ_n (2n+1) iⁿ P_n(ŝ·ê) · (-i / x²) / h_n⁽²⁾'(x),    x = 2πf a / c
//! ```
//!
//! normalized to the free-field pressure at the sphere center, so `p → 1` as
//! `f → 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{to_time_domain, Ear, FrequencyGrid, HrirSet, HrtfSet};
use crate::error::{Error, Result};
use crate::sh::{Direction, SamplingGrid};

/// Terms beyond `ceil(x_max)` required by [`synth_sphere_hrtf`].
pub const MIN_EXTRA_TERMS: usize = 10;
/// Terms beyond `ceil(x_max)` used when no series order is given.
pub const DEFAULT_EXTRA_TERMS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereHeadModel {
    /// Sphere radius in meters.
    pub radius: f64,
    /// Speed of sound in m/s.
    pub speed_of_sound: f64,
    /// Ear azimuths (left, right) in radians on the horizontal plane.
    pub ear_azimuths: (f64, f64),
    /// Number of series terms; `None` picks `ceil(x_max) + DEFAULT_EXTRA_TERMS`.
    pub series_order: Option<usize>,
}

impl Default for SphereHeadModel {
    fn default() -> Self {
        Self {
            radius: 0.0875,
            speed_of_sound: 343.0,
            ear_azimuths: (100f64.to_radians(), -100f64.to_radians()),
            series_order: None,
        }
    }
}

impl SphereHeadModel {
    pub fn with_radius(radius: f64) -> Self {
        Self {
            radius,
            ..Self::default()
        }
    }

    pub fn ear_direction(&self, ear: Ear) -> Direction {
        let az = match ear {
            Ear::Left => self.ear_azimuths.0,
            Ear::Right => self.ear_azimuths.1,
        };
        Direction::from_azimuth_elevation(az, 0.0).expect("finite ear azimuth")
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sphere radius and speed of sound must be positive ({}, {})",
                self.radius, self.speed_of_sound
            )));
        }
        if !self.ear_azimuths.0.is_finite() || !self.ear_azimuths.1.is_finite() {
            return Err(Error::InvalidConfig("ear azimuths must be finite".into()));
        }
        Ok(())
    }
}

/// `(2n+1) iⁿ (-i/x²) / h_n⁽²⁾'(x)` for `n = 0..=order`.
///
/// Terms whose Hankel derivative exceeds `1e150` are below `1e-140` and set to zero,
/// which also keeps the complex division clear of overflow.
fn modal_terms(x: f64, order: usize) -> Vec<Complex64> {
    let (j, y) = spherical_bessel(x, order);
    let mut out = Vec::with_capacity(order + 1);
    let mut i_pow = Complex64::new(1.0, 0.0);
    let scale = Complex64::new(0.0, -1.0 / (x * x));
    let mut overflowed = false;
    for n in 0..=order {
        let (dj, dy) = if n == 0 {
            (-j[1], -y[1])
        } else {
            let k = (n + 1) as f64 / x;
            (j[n - 1] - k * j[n], y[n - 1] - k * y[n])
        };
        overflowed |= !(dy.abs() < 1e150);
        let term = if overflowed {
            Complex64::new(0.0, 0.0)
        } else {
            let h = Complex64::new(dj, -dy);
            i_pow * scale * (2 * n + 1) as f64 / h
        };
        out.push(term);
        i_pow *= Complex64::new(0.0, 1.0);
    }
    out
}

/// Spherical Bessel functions `j_n(x)` and `y_n(x)` for `n = 0..=order + 1`.
fn spherical_bessel(x: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let top = order + 1;
    let (s, c) = x.sin_cos();
    let mut y = vec![0.0; top + 1];
    y[0] = -c / x;
    y[1] = -c / (x * x) - s / x;
    for n in 2..=top {
        y[n] = (2 * n - 1) as f64 / x * y[n - 1] - y[n - 2];
    }

    let mut j = vec![0.0; top + 1];
    j[0] = s / x;
    j[1] = s / (x * x) - c / x;
    // upward recurrence is stable while n < x; continued-fraction ratios above
    let upward_end = (x.floor() as usize).clamp(1, top);
    for n in 2..=upward_end {
        j[n] = (2 * n - 1) as f64 / x * j[n - 1] - j[n - 2];
    }
    if upward_end < top {
        let start = top + 30 + (x as usize);
        let mut ratio = 0.0;
        let mut ratios = vec![0.0; top + 1];
        for n in (upward_end + 1..=start).rev() {
            ratio = x / ((2 * n + 1) as f64 - x * ratio);
            if n <= top {
                ratios[n] = ratio;
            }
        }
        for n in upward_end + 1..=top {
            j[n] = ratios[n] * j[n - 1];
        }
    }
    (j, y)
}

/// Legendre polynomials `P_0..=P_order` at `t`.
fn legendre(t: f64, order: usize) -> Vec<f64> {
    let mut p = vec![0.0; order + 1];
    p[0] = 1.0;
    if order >= 1 {
        p[1] = t;
    }
    for n in 2..=order {
        let nf = n as f64;
        p[n] = ((2.0 * nf - 1.0) * t * p[n - 1] - (nf - 1.0) * p[n - 2]) / nf;
    }
    p
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rigid-sphere HRTFs for plane waves from every grid direction.
///
/// The Nyquist bin is returned as its signed magnitude `|p| sgn(Re p)` so the set
/// corresponds to real impulse responses.
pub fn synth_sphere_hrtf(
    grid: &SamplingGrid,
    freq: &FrequencyGrid,
    model: &SphereHeadModel,
) -> Result<HrtfSet> {
    model.validate()?;
    let x_of = |k: usize| 2.0 * PI * freq.frequency(k) * model.radius / model.speed_of_sound;
    let bins = freq.len();
    let x_max = x_of(bins - 1);
    let required = x_max.ceil() as usize + MIN_EXTRA_TERMS;
    let order = model
        .series_order
        .unwrap_or(x_max.ceil() as usize + DEFAULT_EXTRA_TERMS);
    if order < required {
        return Err(Error::SeriesOrder {
            got: order,
            required,
            frequency: freq.nyquist(),
        });
    }

    let mut terms: Vec<Vec<Complex64>> = Vec::with_capacity(bins);
    terms.push(Vec::new());
    for k in 1..bins {
        let t = modal_terms(x_of(k), order);
        let last = t[order].norm();
        if last > 0.0 && last >= t[order - 1].norm() {
            return Err(Error::SeriesNotConverged {
                frequency: freq.frequency(k),
                order,
            });
        }
        terms.push(t);
    }

    let ears = Ear::BOTH.map(|e| model.ear_direction(e).to_cartesian());
    let values: Vec<Complex64> = grid
        .directions()
        .par_iter()
        .flat_map_iter(|src| {
            let s = src.to_cartesian();
            let terms = &terms;
            ears.into_iter().flat_map(move |ear| {
                let p_n = legendre(dot(s, ear).clamp(-1.0, 1.0), order);
                (0..bins).map(move |k| {
                    if k == 0 {
                        return Complex64::new(1.0, 0.0);
                    }
                    let v: Complex64 = terms[k].iter().zip(&p_n).map(|(t, p)| t * p).sum();
                    if k == bins - 1 {
                        Complex64::new(v.norm().copysign(v.re), 0.0)
                    } else {
                        v
                    }
                })
            })
        })
        .collect();
    HrtfSet::new(grid.clone(), *freq, values)
}

/// Rigid-sphere impulse responses of `n_fft` taps, delayed by `delay_taps` samples.
pub fn synth_sphere_hrir(
    grid: &SamplingGrid,
    sample_rate: f64,
    n_fft: usize,
    model: &SphereHeadModel,
    delay_taps: usize,
) -> Result<HrirSet> {
    let freq = FrequencyGrid::new(sample_rate, n_fft)?;
    let hrtf = synth_sphere_hrtf(grid, &freq, model)?;
    let delayed = hrtf.map(|_, _, k, v| {
        let phase = -2.0 * PI * (k * delay_taps) as f64 / n_fft as f64;
        let v = v * Complex64::from_polar(1.0, phase);
        if k == freq.len() - 1 {
            Complex64::new(v.norm().copysign(v.re), 0.0)
        } else {
            v
        }
    });
    to_time_domain(&delayed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(v: Complex64) -> f64 {
        20.0 * v.norm().log10()
    }

    #[test]
    fn bessel_matches_closed_forms() {
        for x in [0.15, 1.0, 7.3, 38.0] {
            let (j, y) = spherical_bessel(x, 3);
            let (s, c) = f64::sin_cos(x);
            let j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
            let y2 = -(3.0 / (x * x) - 1.0) * c / x - 3.0 * s / (x * x);
            assert!((j[2] - j2).abs() < 1e-12 * (1.0 + j2.abs()), "j2 at {x}");
            assert!((y[2] - y2).abs() < 1e-10 * (1.0 + y2.abs()), "y2 at {x}");
            // Wronskian j_n y_n' - j_n' y_n = 1/x²
            let (dj1, dy1) = (j[0] - 2.0 / x * j[1], y[0] - 2.0 / x * y[1]);
            assert!((j[1] * dy1 - dj1 * y[1] - 1.0 / (x * x)).abs() < 1e-10 / (x * x));
        }
    }

    #[test]
    fn j_small_for_high_orders() {
        // j_20(1) = 1 / (41!!) · (1 - ...) ≈ 7.4e-26 scale; check against series
        let (j, _) = spherical_bessel(1.0, 20);
        let mut double_fact = 1.0;
        for k in (1..=41).step_by(2) {
            double_fact *= k as f64;
        }
        let leading = 1.0 / double_fact * (1.0 - 1.0 / (2.0 * 43.0));
        assert!((j[20] - leading).abs() / leading < 1e-3);
    }

    #[test]
    fn low_frequency_limit_is_unity() {
        // the first bin of a 2048-point grid (23.4 Hz) is within 0.01 dB of the limit;
        // at 93.75 Hz the exact series deviates by up to 0.042 dB
        let grid = SamplingGrid::lebedev(50).unwrap();
        let model = SphereHeadModel::with_radius(0.0875);
        for (n_fft, bound) in [(2048, 0.01), (512, 0.05)] {
            let freq = FrequencyGrid::new(48000.0, n_fft).unwrap();
            let hrtf = synth_sphere_hrtf(&grid, &freq, &model).unwrap();
            for q in 0..grid.len() {
                for ear in Ear::BOTH {
                    assert_eq!(hrtf.get(q, ear, 0), Complex64::new(1.0, 0.0));
                    assert!(db(hrtf.get(q, ear, 1)).abs() < bound, "{n_fft}: {}", db(hrtf.get(q, ear, 1)));
                }
            }
        }
    }

    #[test]
    fn insufficient_order_is_refused() {
        let grid = SamplingGrid::lebedev(6).unwrap();
        let freq = FrequencyGrid::new(48000.0, 64).unwrap();
        let model = SphereHeadModel {
            series_order: Some(20),
            ..SphereHeadModel::default()
        };
        assert!(matches!(
            synth_sphere_hrtf(&grid, &freq, &model),
            Err(Error::SeriesOrder { .. })
        ));
    }

    #[test]
    fn ipsilateral_ear_is_louder_at_8k() {
        let model = SphereHeadModel::default();
        let freq = FrequencyGrid::new(48000.0, 96).unwrap();
        let k = 16; // 8 kHz
        assert_eq!(freq.frequency(k), 8000.0);
        let directions: Vec<Direction> = (0..50)
            .map(|i| {
                let el = -40.0 + 80.0 * i as f64 / 49.0;
                let az = if i % 2 == 0 { 90.0 } else { -90.0 } + (i as f64 - 25.0) * 0.8;
                Direction::from_azimuth_elevation(az.to_radians(), el.to_radians()).unwrap()
            })
            .collect();
        let grid = SamplingGrid::new(directions.clone()).unwrap();
        let hrtf = synth_sphere_hrtf(&grid, &freq, &model).unwrap();
        for (q, d) in directions.iter().enumerate() {
            let (ipsi, contra) = if d.to_cartesian()[1] > 0.0 {
                (Ear::Left, Ear::Right)
            } else {
                (Ear::Right, Ear::Left)
            };
            assert!(hrtf.get(q, ipsi, k).norm() >= hrtf.get(q, contra, k).norm(), "direction {q}");
        }
    }

    #[test]
    fn doubling_series_order_converges() {
        let grid = SamplingGrid::lebedev(26).unwrap();
        let freq = FrequencyGrid::new(48000.0, 128).unwrap();
        let base = SphereHeadModel::default();
        let x_max = 2.0 * PI * 24000.0 * base.radius / base.speed_of_sound;
        let order = x_max.ceil() as usize + DEFAULT_EXTRA_TERMS;
        let a = synth_sphere_hrtf(&grid, &freq, &SphereHeadModel { series_order: Some(order), ..base }).unwrap();
        let b = synth_sphere_hrtf(&grid, &freq, &SphereHeadModel { series_order: Some(2 * order), ..base }).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() <= 1e-9 * y.norm());
        }
    }

    #[test]
    fn mirror_symmetry_swaps_ears() {
        // reflecting the sources (φ → -φ) or swapping the ear azimuths each swaps the
        // channels; doing both restores them
        let grid = SamplingGrid::lebedev(50).unwrap();
        let mirrored = SamplingGrid::new(grid.directions().iter().map(|d| d.mirrored()).collect()).unwrap();
        let freq = FrequencyGrid::new(48000.0, 64).unwrap();
        let model = SphereHeadModel::default();
        let swapped = SphereHeadModel {
            ear_azimuths: (model.ear_azimuths.1, model.ear_azimuths.0),
            ..model
        };
        let a = synth_sphere_hrtf(&grid, &freq, &model).unwrap();
        let reflected = synth_sphere_hrtf(&mirrored, &freq, &model).unwrap();
        let ears_swapped = synth_sphere_hrtf(&grid, &freq, &swapped).unwrap();
        let both = synth_sphere_hrtf(&mirrored, &freq, &swapped).unwrap();
        for q in 0..grid.len() {
            for ear in Ear::BOTH {
                for k in 0..freq.len() {
                    let x = a.get(q, ear, k);
                    let tol = 1e-9 * (1.0 + x.norm());
                    assert!((x - reflected.get(q, ear.other(), k)).norm() <= tol);
                    assert!((x - ears_swapped.get(q, ear.other(), k)).norm() <= tol);
                    assert!((x - both.get(q, ear, k)).norm() <= tol);
                }
            }
        }
    }

    #[test]
    fn ipsilateral_phase_leads() {
        // a source at the left ear arrives there before the head center: positive phase
        let model = SphereHeadModel::default();
        let grid = SamplingGrid::new(vec![model.ear_direction(Ear::Left)]).unwrap();
        let freq = FrequencyGrid::new(48000.0, 512).unwrap();
        let hrtf = synth_sphere_hrtf(&grid, &freq, &model).unwrap();
        let v = hrtf.get(0, Ear::Left, 2);
        let expected = 2.0 * PI * freq.frequency(2) * model.radius / model.speed_of_sound * 1.5;
        assert!(v.arg() > 0.0 && v.arg() < 1.2 * expected, "{}", v.arg());
    }

    #[test]
    fn hrir_is_real_and_consistent() {
        let grid = SamplingGrid::lebedev(14).unwrap();
        let hrir = synth_sphere_hrir(&grid, 48000.0, 64, &SphereHeadModel::default(), 16).unwrap();
        assert_eq!(hrir.taps(), 64);
        let back = crate::hrtf::to_frequency_domain(&hrir, 64).unwrap();
        for v in back.values() {
            assert!(v.norm() < 3.0);
        }
    }
}
