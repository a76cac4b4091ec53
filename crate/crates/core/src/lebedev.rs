//! Embedded Lebedev quadrature rules.
//!
//! Tables are stored as `x y z w` text with weights summing to 4π and parsed
//! once on first use. `data/gen_lebedev.py` regenerates them.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::sh::{Direction, SamplingGrid};

const TABLES: &[(usize, &str)] = &[
    (6, include_str!("../data/lebedev_0006.txt")),
    (14, include_str!("../data/lebedev_0014.txt")),
    (26, include_str!("../data/lebedev_0026.txt")),
    (50, include_str!("../data/lebedev_0050.txt")),
    (110, include_str!("../data/lebedev_0110.txt")),
    (2702, include_str!("../data/lebedev_2702.txt")),
];

/// Point counts of the shipped rules.
pub fn available() -> Vec<usize> {
    TABLES.iter().map(|(n, _)| *n).collect()
}

fn parse(text: &str) -> SamplingGrid {
    let mut directions = Vec::new();
    let mut weights = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().expect("embedded Lebedev table is well formed"))
            .collect();
        directions.push(Direction::from_cartesian(v[0], v[1], v[2]).expect("unit vector"));
        weights.push(v[3]);
    }
    SamplingGrid::with_weights(directions, weights).expect("embedded weights sum to 4π")
}

pub(crate) fn grid(points: usize) -> Result<SamplingGrid> {
    static CACHE: [OnceLock<SamplingGrid>; 6] = [const { OnceLock::new() }; 6];
    let slot = TABLES
        .iter()
        .position(|(n, _)| *n == points)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "no embedded Lebedev rule with {points} points (available: {:?})",
                available()
            ))
        })?;
    Ok(CACHE[slot].get_or_init(|| parse(TABLES[slot].1)).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn all_rules_load() {
        for n in available() {
            let g = grid(n).unwrap();
            assert_eq!(g.len(), n);
            let sum: f64 = g.weights().unwrap().iter().sum();
            assert!((sum - 4.0 * PI).abs() < 1e-12);
        }
        assert!(grid(7).is_err());
    }

    #[test]
    fn lebedev_2702_integrates_a_polynomial() {
        // ∫ x⁴ dΩ = 4π/5
        let g = grid(2702).unwrap();
        let integral: f64 = g
            .directions()
            .iter()
            .zip(g.weights().unwrap())
            .map(|(d, w)| d.to_cartesian()[0].powi(4) * w)
            .sum();
        assert!((integral - 4.0 * PI / 5.0).abs() < 1e-13);
    }
}
