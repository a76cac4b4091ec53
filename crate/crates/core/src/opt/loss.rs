//! LS and masked-magnitude loss terms with analytic Wirtinger gradients.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hrtf::{Ear, HrtfSet};
use crate::mask::NotchMask;
use crate::sh::{build_basis, num_coeffs, ShBasisMatrix};
use crate::solver::ShHrtf;

/// A mean over `count` (direction, ear, bin) entries; `count == 0` marks an empty bin set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub count: usize,
}

impl LossTerm {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// `ε = ls + mmagls`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub eps: f64,
    pub ls: LossTerm,
    pub mmagls: LossTerm,
}

/// Bins with `f < cutoff` and bins with `f ≥ cutoff`.
pub fn split_bins(reference: &HrtfSet, cutoff_hz: f64) -> (Vec<usize>, Vec<usize>) {
    (0..reference.num_bins()).partition(|&k| reference.freq().frequency(k) < cutoff_hz)
}

/// Precomputed objective for one reference set, mask and bin split.
///
/// Coefficients are passed flat in the [`ShHrtf`] layout `[bin][ear][coefficient]`.
pub struct Objective<'a> {
    reference: &'a HrtfSet,
    mask: &'a NotchMask,
    basis: ShBasisMatrix,
    order: usize,
    ls_bins: Vec<usize>,
    mag_bins: Vec<usize>,
}

struct PairResult {
    ls: f64,
    mag: f64,
    grad: Vec<Complex64>,
}

impl<'a> Objective<'a> {
    pub fn new(reference: &'a HrtfSet, mask: &'a NotchMask, order: usize, ls_bins: Vec<usize>, mag_bins: Vec<usize>) -> Result<Self> {
        mask.check_compatible(reference)?;
        let bins = reference.num_bins();
        if let Some(k) = ls_bins.iter().chain(&mag_bins).find(|&&k| k >= bins) {
            return Err(Error::Dimension(format!("bin {k} out of range for {bins} bins")));
        }
        Ok(Self {
            reference,
            mask,
            basis: build_basis(reference.grid(), order)?,
            order,
            ls_bins,
            mag_bins,
        })
    }

    /// Objective with LS below `cutoff_hz` and the masked magnitude term at and above it.
    pub fn with_cutoff(reference: &'a HrtfSet, mask: &'a NotchMask, order: usize, cutoff_hz: f64) -> Result<Self> {
        let (ls, mag) = split_bins(reference, cutoff_hz);
        Self::new(reference, mask, order, ls, mag)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_values(&self) -> usize {
        num_coeffs(self.order) * 2 * self.reference.num_bins()
    }

    pub fn ls_bins(&self) -> &[usize] {
        &self.ls_bins
    }

    pub fn mag_bins(&self) -> &[usize] {
        &self.mag_bins
    }

    fn counts(&self) -> (usize, usize) {
        let per_bin = self.reference.num_directions() * 2;
        (per_bin * self.ls_bins.len(), per_bin * self.mag_bins.len())
    }

    fn pair(&self, coeffs: &[Complex64], bin: usize, ear: Ear, magnitude: bool, scale: f64, want_grad: bool) -> PairResult {
        let c = num_coeffs(self.order);
        let offset = (bin * 2 + ear.index()) * c;
        let predicted = self.basis.synthesize(&coeffs[offset..offset + c]);
        let mut weights = vec![Complex64::new(0.0, 0.0); predicted.len()];
        let mut sum = 0.0;
        for (q, (p, w)) in predicted.iter().zip(weights.iter_mut()).enumerate() {
            let h = self.reference.get(q, ear, bin);
            if magnitude {
                let m = self.mask.get(q, ear, bin);
                let abs_p = p.norm();
                let diff = abs_p - h.norm();
                sum += (diff * m) * (diff * m);
                if abs_p > 0.0 {
                    *w = p * (2.0 * m * m * diff / abs_p * scale);
                }
            } else {
                let r = p - h;
                sum += r.norm_sqr();
                *w = r * (2.0 * scale);
            }
        }
        let mut grad = Vec::new();
        if want_grad {
            grad = vec![Complex64::new(0.0, 0.0); c];
            self.basis.adjoint_into(&weights, &mut grad);
        }
        let (ls, mag) = if magnitude { (0.0, sum) } else { (sum, 0.0) };
        PairResult { ls, mag, grad }
    }

    /// Loss and, when `want_grad`, `G = ∂ε/∂Re c + i ∂ε/∂Im c` for every coefficient.
    pub fn evaluate(&self, coeffs: &[Complex64], want_grad: bool) -> (Loss, Option<Vec<Complex64>>) {
        assert_eq!(coeffs.len(), self.num_values(), "coefficient vector length");
        let (n_ls, n_mag) = self.counts();
        let tasks: Vec<(usize, Ear, bool)> = self
            .ls_bins
            .iter()
            .map(|&k| (k, false))
            .chain(self.mag_bins.iter().map(|&k| (k, true)))
            .flat_map(|(k, mag)| Ear::BOTH.map(|e| (k, e, mag)))
            .collect();
        let results: Vec<PairResult> = tasks
            .par_iter()
            .map(|&(k, ear, mag)| {
                let count = if mag { n_mag } else { n_ls };
                self.pair(coeffs, k, ear, mag, 1.0 / count as f64, want_grad)
            })
            .collect();

        // ordered reduction keeps results independent of the thread count
        let (mut ls_sum, mut mag_sum) = (0.0, 0.0);
        for r in &results {
            ls_sum += r.ls;
            mag_sum += r.mag;
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        let ls = LossTerm {
            value: mean(ls_sum, n_ls),
            count: n_ls,
        };
        let mmagls = LossTerm {
            value: mean(mag_sum, n_mag),
            count: n_mag,
        };
        let loss = Loss {
            eps: ls.value + mmagls.value,
            ls,
            mmagls,
        };
        let grad = want_grad.then(|| {
            let c = num_coeffs(self.order);
            let mut g = vec![Complex64::new(0.0, 0.0); coeffs.len()];
            for (&(k, ear, _), r) in tasks.iter().zip(&results) {
                let offset = (k * 2 + ear.index()) * c;
                g[offset..offset + c].copy_from_slice(&r.grad);
            }
            g
        });
        (loss, grad)
    }
}

fn check(candidate: &ShHrtf, reference: &HrtfSet) -> Result<()> {
    candidate.check_against(reference)
}

/// Mean of `|ĥ − h|²` over directions, ears and `bins`.
pub fn loss_ls(candidate: &ShHrtf, reference: &HrtfSet, bins: &[usize]) -> Result<LossTerm> {
    check(candidate, reference)?;
    let ones = NotchMask::ones(reference.grid().clone(), *reference.freq(), Default::default());
    let objective = Objective::new(reference, &ones, candidate.order(), bins.to_vec(), Vec::new())?;
    Ok(objective.evaluate(candidate.coefficients(), false).0.ls)
}

/// Mean of `|(|ĥ| − |h|) M|²` over directions, ears and `bins`.
pub fn loss_mmagls(candidate: &ShHrtf, reference: &HrtfSet, mask: &NotchMask, bins: &[usize]) -> Result<LossTerm> {
    check(candidate, reference)?;
    let objective = Objective::new(reference, mask, candidate.order(), Vec::new(), bins.to_vec())?;
    Ok(objective.evaluate(candidate.coefficients(), false).0.mmagls)
}

/// `ε = mean LS over f < f_c + mean masked magnitude loss over f ≥ f_c`.
pub fn total_loss(candidate: &ShHrtf, reference: &HrtfSet, mask: &NotchMask, cutoff_hz: f64) -> Result<Loss> {
    check(candidate, reference)?;
    let objective = Objective::with_cutoff(reference, mask, candidate.order(), cutoff_hz)?;
    Ok(objective.evaluate(candidate.coefficients(), false).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrtf::FrequencyGrid;
    use crate::mask::MaskConfig;
    use crate::sh::{sh_all, SamplingGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn toy(seed: u64) -> (HrtfSet, ShHrtf, NotchMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = SamplingGrid::lebedev(6).unwrap();
        let freq = FrequencyGrid::new(48000.0, 2).unwrap();
        let reference = HrtfSet::from_fn(grid.clone(), freq, |_, _, _| random_complex(&mut rng)).unwrap();
        let coeffs = (0..4 * 2 * 2).map(|_| random_complex(&mut rng)).collect();
        let candidate = ShHrtf::new(1, freq, coeffs).unwrap();
        let values = (0..6 * 2 * 2).map(|_| rng.random_range(1.0..4.0)).collect();
        let mask = NotchMask::from_values(grid, freq, MaskConfig::default(), values).unwrap();
        (reference, candidate, mask)
    }

    /// Direct scalar loops over every entry.
    fn oracle(candidate: &ShHrtf, reference: &HrtfSet, mask: &NotchMask, bins: &[usize], magnitude: bool) -> f64 {
        let mut sum = 0.0;
        let mut n = 0;
        for &k in bins {
            for ear in Ear::BOTH {
                for (q, d) in reference.grid().directions().iter().enumerate() {
                    let y = sh_all(candidate.order(), d);
                    let mut p = Complex64::new(0.0, 0.0);
                    for i in 0..y.len() {
                        p += candidate.get(i, ear, k) * y[i];
                    }
                    let h = reference.get(q, ear, k);
                    sum += if magnitude {
                        ((p.norm() - h.norm()) * mask.get(q, ear, k)).powi(2)
                    } else {
                        (p - h).norm_sqr()
                    };
                    n += 1;
                }
            }
        }
        sum / n as f64
    }

    #[test]
    fn ls_of_exact_fit_is_zero() {
        let grid = SamplingGrid::lebedev(14).unwrap();
        let freq = FrequencyGrid::new(48000.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let coeffs = (0..4 * 2 * 5).map(|_| random_complex(&mut rng)).collect();
        let truth = ShHrtf::new(1, freq, coeffs).unwrap();
        let reference = truth.reconstruct(&grid).unwrap();
        let fit = crate::solver::solve_ls(&reference, 1).unwrap();
        let all: Vec<usize> = (0..5).collect();
        assert!(loss_ls(&fit, &reference, &all).unwrap().value < 1e-20);
    }

    #[test]
    fn constant_offset_gives_delta_squared() {
        let grid = SamplingGrid::lebedev(26).unwrap();
        let freq = FrequencyGrid::new(48000.0, 4).unwrap();
        let reference = HrtfSet::from_fn(grid, freq, |_, _, _| Complex64::new(0.7, -0.2)).unwrap();
        let delta = 0.3;
        let dc = (0.7 + delta) * (4.0 * std::f64::consts::PI).sqrt();
        let coeffs = (0..2 * 3).map(|i| Complex64::new(dc, -0.2 * (4.0 * std::f64::consts::PI).sqrt()) * if i < 6 { 1.0 } else { 0.0 }).collect();
        let candidate = ShHrtf::new(0, freq, coeffs).unwrap();
        let term = loss_ls(&candidate, &reference, &[0, 1, 2]).unwrap();
        assert!((term.value - delta * delta).abs() < 1e-14);
        assert_eq!(term.count, 26 * 2 * 3);
    }

    #[test]
    fn losses_match_scalar_loops() {
        for seed in 0..5 {
            let (reference, candidate, mask) = toy(seed);
            let ls = loss_ls(&candidate, &reference, &[0, 1]).unwrap().value;
            assert!((ls - oracle(&candidate, &reference, &mask, &[0, 1], false)).abs() < 1e-12);
            let mag = loss_mmagls(&candidate, &reference, &mask, &[1]).unwrap().value;
            assert!((mag - oracle(&candidate, &reference, &mask, &[1], true)).abs() < 1e-12);
            let total = total_loss(&candidate, &reference, &mask, 680.0).unwrap();
            assert_eq!(total.eps, total.ls.value + total.mmagls.value);
            let expected = oracle(&candidate, &reference, &mask, &[0], false) + oracle(&candidate, &reference, &mask, &[1], true);
            assert!((total.eps - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_mask_is_plain_magnitude_loss_and_phase_blind() {
        let (reference, candidate, _) = toy(11);
        let ones = NotchMask::ones(reference.grid().clone(), *reference.freq(), MaskConfig::default());
        let mag = loss_mmagls(&candidate, &reference, &ones, &[0, 1]).unwrap().value;
        assert!((mag - oracle(&candidate, &reference, &ones, &[0, 1], true)).abs() < 1e-12);

        // reference with the candidate's magnitudes and arbitrary phases
        let rec = candidate.reconstruct(reference.grid()).unwrap();
        let rotated = rec.map(|q, _, k, v| v * Complex64::from_polar(1.0, 0.37 * q as f64 + k as f64));
        assert!(loss_mmagls(&candidate, &rotated, &ones, &[0, 1]).unwrap().value < 1e-28);
    }

    #[test]
    fn doubling_mask_quadruples_contribution() {
        let (reference, candidate, mask) = toy(4);
        let mut doubled = mask.clone();
        for q in 0..6 {
            *doubled.get_mut(q, Ear::Left, 1) *= 2.0;
        }
        let part = |m: &NotchMask| {
            let mut s = 0.0;
            for (q, d) in reference.grid().directions().iter().enumerate() {
                let y = sh_all(1, d);
                let p: Complex64 = (0..4).map(|i| candidate.get(i, Ear::Left, 1) * y[i]).sum();
                s += ((p.norm() - reference.get(q, Ear::Left, 1).norm()) * m.get(q, Ear::Left, 1)).powi(2);
            }
            s / 12.0
        };
        let a = loss_mmagls(&candidate, &reference, &mask, &[1]).unwrap().value;
        let b = loss_mmagls(&candidate, &reference, &doubled, &[1]).unwrap().value;
        assert!(((b - a) - 3.0 * part(&mask)).abs() < 1e-12);
        assert!((part(&doubled) - 4.0 * part(&mask)).abs() < 1e-12);
    }

    #[test]
    fn empty_bin_sets_are_flagged() {
        let (reference, candidate, mask) = toy(1);
        let term = loss_ls(&candidate, &reference, &[]).unwrap();
        assert!(term.is_empty());
        assert_eq!(term.value, 0.0);
        let total = total_loss(&candidate, &reference, &mask, 0.0).unwrap();
        assert!(total.ls.is_empty() && !total.mmagls.is_empty());
    }

    #[test]
    fn raising_the_mask_never_lowers_the_loss() {
        let (reference, candidate, mask) = toy(7);
        let base = total_loss(&candidate, &reference, &mask, 680.0).unwrap().eps;
        for q in 0..6 {
            let mut m = mask.clone();
            *m.get_mut(q, Ear::Right, 1) += 0.5;
            assert!(total_loss(&candidate, &reference, &m, 680.0).unwrap().eps >= base);
        }
    }
}
