use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::{FrequencyGrid, HrirSet, HrtfSet};
use crate::error::{Error, Result};

/// Zero-padded real FFT of every impulse response, keeping `n_fft/2 + 1` bins.
///
/// DC and Nyquist bins are returned with an exactly zero imaginary part.
pub fn to_frequency_domain(hrir: &HrirSet, n_fft: usize) -> Result<HrtfSet> {
    if n_fft < hrir.taps() || n_fft % 2 != 0 || n_fft < 2 {
        return Err(Error::FftSize {
            n_fft,
            taps: hrir.taps(),
        });
    }
    let freq = FrequencyGrid::new(hrir.sample_rate(), n_fft)?;
    let bins = freq.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let taps = hrir.taps();

    let values: Vec<Complex64> = hrir
        .samples()
        .par_chunks(taps)
        .flat_map_iter(|ir| {
            let mut buf: Vec<Complex64> = ir.iter().map(|&s| Complex64::new(s, 0.0)).collect();
            buf.resize(n_fft, Complex64::new(0.0, 0.0));
            fft.process(&mut buf);
            buf.truncate(bins);
            buf[0].im = 0.0;
            buf[bins - 1].im = 0.0;
            buf.into_iter()
        })
        .collect();
    HrtfSet::new(hrir.grid().clone(), freq, values)
}

/// Inverse of [`to_frequency_domain`]: `n_fft`-tap impulse responses from the
/// positive-frequency half spectrum (imaginary parts at DC and Nyquist ignored).
pub fn to_time_domain(hrtf: &HrtfSet) -> Result<HrirSet> {
    let freq = *hrtf.freq();
    let n_fft = freq.n_fft();
    let bins = freq.len();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let scale = 1.0 / n_fft as f64;

    let samples: Vec<f64> = hrtf
        .values()
        .par_chunks(bins)
        .flat_map_iter(|half| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
            buf[..bins].copy_from_slice(half);
            buf[0].im = 0.0;
            buf[bins - 1].im = 0.0;
            for k in 1..bins - 1 {
                buf[n_fft - k] = half[k].conj();
            }
            ifft.process(&mut buf);
            buf.into_iter().map(move |c| c.re * scale)
        })
        .collect();
    HrirSet::new(freq.sample_rate(), n_fft, hrtf.grid().clone(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrtf::Ear;
    use crate::sh::{Direction, SamplingGrid};
    use std::f64::consts::PI;

    fn one_direction() -> SamplingGrid {
        SamplingGrid::new(vec![Direction::new(0.5, 0.5).unwrap()]).unwrap()
    }

    #[test]
    fn unit_impulse_is_flat() {
        let mut samples = vec![0.0; 2 * 16];
        samples[0] = 1.0;
        samples[16] = 1.0;
        let hrir = HrirSet::new(48000.0, 16, one_direction(), samples).unwrap();
        let hrtf = to_frequency_domain(&hrir, 512).unwrap();
        assert_eq!(hrtf.num_bins(), 257);
        for ear in Ear::BOTH {
            for v in hrtf.spectrum(0, ear) {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn delay_follows_shift_theorem() {
        let d = 5;
        let mut samples = vec![0.0; 2 * 32];
        samples[d] = 1.0;
        samples[32 + d] = 1.0;
        let hrir = HrirSet::new(48000.0, 32, one_direction(), samples).unwrap();
        let hrtf = to_frequency_domain(&hrir, 64).unwrap();
        let fs = hrtf.freq().sample_rate();
        for k in 1..hrtf.num_bins() - 1 {
            let f = hrtf.freq().frequency(k);
            let v = hrtf.get(0, Ear::Left, k);
            let expect = Complex64::from_polar(1.0, -2.0 * PI * f * d as f64 / fs);
            assert!((v - expect).norm() < 1e-12, "bin {k}");
        }
    }

    #[test]
    fn truncation_refused() {
        let hrir = HrirSet::new(48000.0, 32, one_direction(), vec![0.0; 64]).unwrap();
        assert!(matches!(
            to_frequency_domain(&hrir, 16),
            Err(Error::FftSize { n_fft: 16, taps: 32 })
        ));
        assert!(to_frequency_domain(&hrir, 33).is_err());
    }

    #[test]
    fn round_trip_reproduces_padded_input() {
        let taps = 37;
        let samples: Vec<f64> = (0..2 * taps).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let hrir = HrirSet::new(44100.0, taps, one_direction(), samples.clone()).unwrap();
        let back = to_time_domain(&to_frequency_domain(&hrir, 128).unwrap()).unwrap();
        assert_eq!(back.taps(), 128);
        for ear in Ear::BOTH {
            let orig = &samples[ear.index() * taps..(ear.index() + 1) * taps];
            let ir = back.impulse_response(0, ear);
            for t in 0..128 {
                let expect = if t < taps { orig[t] } else { 0.0 };
                assert!((ir[t] - expect).abs() < 1e-12);
            }
        }
    }
}
