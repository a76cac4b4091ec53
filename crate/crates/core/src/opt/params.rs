//! Parameterizations of the refined coefficient vector.
//!
//! Coefficients are flattened to a real vector `x` of length `D = 2 (N+1)² F 2`
//! (`re, im` interleaved, `[bin][ear][coefficient]` order). The network map is
//!
//! ```text
//! y = s x₀ + W₂ (W₁ x₀ + b₁) + b₂
//! ```
//!
//! with `x₀` the initial coefficients, hidden width `W` and `s ∈ {0, 1}` the
//! skip flag. The direct map optimizes `y` itself.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    Network,
    Direct,
}

/// Half-width of the uniform initialization of `W₁`.
pub const HIDDEN_INIT_SCALE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ParamMap {
    mode: ParamMode,
    input: Vec<f64>,
    width: usize,
    skip: bool,
}

pub fn flatten(coeffs: &[Complex64]) -> Vec<f64> {
    coeffs.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn unflatten(values: &[f64]) -> Vec<Complex64> {
    values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

impl ParamMap {
    pub fn network(init: &[Complex64], width: usize, skip: bool) -> Self {
        Self {
            mode: ParamMode::Network,
            input: flatten(init),
            width,
            skip,
        }
    }

    pub fn direct(init: &[Complex64]) -> Self {
        Self {
            mode: ParamMode::Direct,
            input: flatten(init),
            width: 0,
            skip: false,
        }
    }

    pub fn mode(&self) -> ParamMode {
        self.mode
    }

    /// Length of the real output vector.
    pub fn output_len(&self) -> usize {
        self.input.len()
    }

    pub fn num_params(&self) -> usize {
        let d = self.input.len();
        match self.mode {
            ParamMode::Direct => d,
            ParamMode::Network => 2 * self.width * d + self.width + d,
        }
    }

    /// Network: `W₁ ~ U(±1e-4)`, `W₂ = b₁ = b₂ = 0`. Direct: the initial coefficients.
    pub fn initial_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self.mode {
            ParamMode::Direct => self.input.clone(),
            ParamMode::Network => {
                let d = self.input.len();
                let mut p = vec![0.0; self.num_params()];
                for v in &mut p[..self.width * d] {
                    *v = rng.random_range(-HIDDEN_INIT_SCALE..HIDDEN_INIT_SCALE);
                }
                p
            }
        }
    }

    fn split<'p>(&self, p: &'p [f64]) -> (&'p [f64], &'p [f64], &'p [f64], &'p [f64]) {
        let (d, w) = (self.input.len(), self.width);
        let (w1, rest) = p.split_at(w * d);
        let (b1, rest) = rest.split_at(w);
        let (w2, b2) = rest.split_at(d * w);
        (w1, b1, w2, b2)
    }

    fn hidden(&self, w1: &[f64], b1: &[f64]) -> Vec<f64> {
        let d = self.input.len();
        (0..self.width)
            .map(|j| {
                let row = &w1[j * d..(j + 1) * d];
                b1[j] + row.iter().zip(&self.input).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        match self.mode {
            ParamMode::Direct => p.to_vec(),
            ParamMode::Network => {
                let (w1, b1, w2, b2) = self.split(p);
                let h = self.hidden(w1, b1);
                let w = self.width;
                (0..self.input.len())
                    .map(|i| {
                        let row = &w2[i * w..(i + 1) * w];
                        let mut y = b2[i] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
                        if self.skip {
                            y += self.input[i];
                        }
                        y
                    })
                    .collect()
            }
        }
    }

    /// Chain rule: parameter gradient from the output gradient `g_y`.
    pub fn backward(&self, p: &[f64], g_y: &[f64]) -> Vec<f64> {
        assert_eq!(g_y.len(), self.input.len(), "output gradient length");
        match self.mode {
            ParamMode::Direct => g_y.to_vec(),
            ParamMode::Network => {
                let (w1, b1, w2, _) = self.split(p);
                let (d, w) = (self.input.len(), self.width);
                let h = self.hidden(w1, b1);
                let mut g = vec![0.0; self.num_params()];
                let mut g_h = vec![0.0; w];
                {
                    let (_, rest) = g.split_at_mut(w * d + w);
                    let (g_w2, g_b2) = rest.split_at_mut(d * w);
                    for i in 0..d {
                        let gi = g_y[i];
                        g_b2[i] = gi;
                        for j in 0..w {
                            g_w2[i * w + j] = gi * h[j];
                            g_h[j] += w2[i * w + j] * gi;
                        }
                    }
                }
                let (g_w1, rest) = g.split_at_mut(w * d);
                rest[..w].copy_from_slice(&g_h);
                for j in 0..w {
                    for (gw, x) in g_w1[j * d..(j + 1) * d].iter_mut().zip(&self.input) {
                        *gw = g_h[j] * x;
                    }
                }
                g
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_dimensions_give_about_70k_parameters() {
        let init = vec![Complex64::new(0.0, 0.0); 4 * 2 * 257];
        let map = ParamMap::network(&init, 8, true);
        assert_eq!(map.output_len(), 4112);
        assert_eq!(map.num_params(), 69_912);
    }

    #[test]
    fn initial_network_reproduces_input() {
        let init: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let map = ParamMap::network(&init, 3, true);
        let p = map.initial_params(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(unflatten(&map.forward(&p)), init);
        let no_skip = ParamMap::network(&init, 3, false);
        assert!(no_skip.forward(&p).iter().all(|v| *v == 0.0));
        let direct = ParamMap::direct(&init);
        assert_eq!(unflatten(&direct.forward(&direct.initial_params(&mut ChaCha8Rng::seed_from_u64(1)))), init);
    }

    #[test]
    fn backward_matches_finite_differences_of_a_linear_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init: Vec<Complex64> = (0..6).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let map = ParamMap::network(&init, 2, true);
        let p: Vec<f64> = (0..map.num_params()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let probe: Vec<f64> = (0..map.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        // f(p) = probe · y(p) + 0.5 |y(p)|²
        let f = |p: &[f64]| {
            let y = map.forward(p);
            y.iter().zip(&probe).map(|(a, b)| a * b + 0.5 * a * a).sum::<f64>()
        };
        let y = map.forward(&p);
        let g_y: Vec<f64> = y.iter().zip(&probe).map(|(a, b)| a + b).collect();
        let g = map.backward(&p, &g_y);
        let step = 1e-6;
        for i in 0..map.num_params() {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[i] += step;
            lo[i] -= step;
            let fd = (f(&hi) - f(&lo)) / (2.0 * step);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + g[i].abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }
}
