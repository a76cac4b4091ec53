use mmagls::sh::{build_basis, encode_plane_wave, render_binaural, sh_all, sht_ls};
use mmagls::solver::solve_ls;
use mmagls::{Direction, Ear, FrequencyGrid, HrtfSet, SamplingGrid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[test]
fn order_one_fit_of_order_four_field_leaves_the_orthogonal_remainder() {
    let grid = SamplingGrid::lebedev(2702).unwrap();
    let basis4 = build_basis(&grid, 4).unwrap();
    let basis1 = build_basis(&grid, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let c = random_coeffs(&mut rng, 25);
        let field = basis4.synthesize(&c);
        let fit = sht_ls(&field, &grid, 1).unwrap();
        let approx = basis1.synthesize(fit.coefficients());
        let residual: f64 = field.iter().zip(&approx).map(|(a, b)| (a - b).norm_sqr()).sum();

        // Gram-Schmidt basis of the order-1 column space, then remove the
        // projection of the order 2..4 part of the field from itself
        let q = grid.len();
        let cols: Vec<Vec<Complex64>> = (0..4).map(|i| (0..q).map(|r| basis1.get(r, i)).collect()).collect();
        let mut ortho: Vec<Vec<Complex64>> = Vec::new();
        for col in cols {
            let mut v = col.clone();
            for u in &ortho {
                let p = dot(u, &v);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
            let norm = dot(&v, &v).re.sqrt();
            ortho.push(v.into_iter().map(|x| x / norm).collect());
        }
        let mut high_coeffs = c.clone();
        high_coeffs[..4].iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let mut discarded = basis4.synthesize(&high_coeffs);
        for u in &ortho {
            let p = dot(u, &discarded);
            discarded.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
        let oracle: f64 = discarded.iter().map(|v| v.norm_sqr()).sum();
        assert!((residual - oracle).abs() <= 1e-8 * oracle, "{residual} vs {oracle}");
    }
}

#[test]
fn plane_wave_renders_to_the_hrtf_at_its_direction() {
    let grid = SamplingGrid::lebedev(50).unwrap();
    let freq = FrequencyGrid::new(48000.0, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth: Vec<Vec<Complex64>> = (0..freq.len() * 2).map(|_| random_coeffs(&mut rng, 4)).collect();
    let hrtf = HrtfSet::from_fn(grid.clone(), freq, |q, ear, k| {
        let y = sh_all(1, &grid.directions()[q]);
        truth[k * 2 + ear.index()].iter().zip(&y).map(|(c, y)| c * y).sum()
    })
    .unwrap();
    let coeffs = solve_ls(&hrtf, 1).unwrap();
    for _ in 0..20 {
        let z: f64 = rng.random_range(-1.0..1.0);
        let dir = Direction::new(z.acos(), rng.random_range(-3.1..3.1)).unwrap();
        let a = encode_plane_wave(&dir, 1);
        let y = sh_all(1, &dir);
        for k in 0..freq.len() {
            let (l, r) = render_binaural(&a, &coeffs, k).unwrap();
            for (ear, got) in [(Ear::Left, l), (Ear::Right, r)] {
                let expected: Complex64 = coeffs.bin_coeffs(k, ear.index()).iter().zip(&y).map(|(c, y)| c * y).sum();
                assert!((got - expected).norm() < 1e-9, "bin {k} {}: {got} vs {expected}", ear.name());
                let original: Complex64 = truth[k * 2 + ear.index()].iter().zip(&y).map(|(c, y)| c * y).sum();
                assert!((got - original).norm() < 1e-9);
            }
        }
    }
}
