#![allow(dead_code)]

use emerge_core::distribution::DiscreteDistribution;
use emerge_core::grid::{grid_sample, AxisSpec, GridFunction};
use emerge_core::weights::Weights;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Weights {
    let raw: Vec<f64> = (0..=k).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Weights::from_inputs(&raw[..k].iter().map(|x| x / total).collect::<Vec<_>>()).unwrap()
}

/// Monotone grid function built from nonnegative increments.
pub fn random_monotone(rng: &mut ChaCha8Rng, axes: &[Vec<f64>], theta: f64) -> GridFunction {
    let dims: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    let inc: Vec<f64> = (0..total)
        .map(|_| if rng.random_bool(0.6) { rng.random_range(0.0..0.5) } else { 0.0 })
        .collect();
    let mut values = inc.clone();
    // Prefix sums along each axis, row-major with the last axis fastest.
    let mut stride = 1;
    for k in (0..dims.len()).rev() {
        for flat in 0..total {
            if (flat / stride) % dims[k] != 0 {
                values[flat] += values[flat - stride];
            }
        }
        stride *= dims[k];
    }
    GridFunction::new(theta, axes.to_vec(), values).unwrap()
}

/// Law on a random subset (at most `max_atoms`) of `axis`, mean <= 1.
pub fn random_law(rng: &mut ChaCha8Rng, axis: &[f64], max_atoms: usize) -> DiscreteDistribution {
    loop {
        let n = rng.random_range(1..=max_atoms.min(axis.len()));
        let mut atoms: Vec<f64> = axis.choose_multiple(rng, n).copied().collect();
        atoms.sort_by(f64::total_cmp);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let fix: f64 = 1.0 - probs[..n - 1].iter().sum::<f64>();
        probs[n - 1] = fix;
        let law = DiscreteDistribution::new(atoms, probs).unwrap();
        if law.mean() <= 1.0 {
            return law;
        }
    }
}

/// `min` of a few random weighted averages: valid, not itself affine.
pub fn min_of_weighted(rng: &mut ChaCha8Rng, k: usize, pieces: usize, theta: f64, axes: &[AxisSpec]) -> (GridFunction, Vec<Weights>) {
    let ws: Vec<Weights> = (0..pieces).map(|_| random_weights(rng, k)).collect();
    let f = grid_sample(
        |e| ws.iter().map(|w| w.merge(e).unwrap()).fold(f64::INFINITY, f64::min),
        theta,
        axes,
    )
    .unwrap();
    (f, ws)
}
