//! Standard-normal simulation draws for the random-coefficient logit.
//!
//! Draws are a pure function of `(seed, observation index, draw index)`, so
//! they stay fixed for the whole optimization and can be regenerated at
//! prediction time.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng::{self, streams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawScheme {
    /// Base-2 Halton sequence, consecutive blocks per observation, with a
    /// seeded random shift modulo 1.
    #[default]
    Halton,
    /// Independent pseudo-random normals.
    Pseudo,
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Generates the `r` draws of one observation.
pub fn normal_draws(scheme: DrawScheme, seed: u64, obs_index: usize, r: usize) -> Vec<f64> {
    match scheme {
        DrawScheme::Halton => {
            let shift: f64 = rng::stream(seed, streams::DRAWS).random();
            let normal = Normal::standard();
            let start = (obs_index * r) as u64 + 1;
            (0..r as u64)
                .map(|k| {
                    let u = (radical_inverse(start + k, 2) + shift).fract();
                    normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
                })
                .collect()
        }
        DrawScheme::Pseudo => {
            let mut g = rng::stream(rng::sub_seed(seed, streams::DRAWS), obs_index as u64);
            (0..r).map(|_| g.sample(StandardNormal)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        let seq: Vec<f64> = (1..=7).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(seq, vec![0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875]);
        assert!((radical_inverse(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn draws_are_fixed_and_roughly_standard() {
        for scheme in [DrawScheme::Halton, DrawScheme::Pseudo] {
            let a = normal_draws(scheme, 4, 12, 200);
            assert_eq!(a, normal_draws(scheme, 4, 12, 200));
            assert_ne!(a, normal_draws(scheme, 4, 13, 200));
            let all: Vec<f64> = (0..200).flat_map(|n| normal_draws(scheme, 9, n, 200)).collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
            assert!(mean.abs() < 0.01, "{scheme:?} mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "{scheme:?} var {var}");
        }
    }
}
