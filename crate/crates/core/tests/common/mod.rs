#![allow(dead_code)]

use calref::{summarize, EvalSet, PredictionSummary};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random logits batch with `n <= max_n` rows and `2 <= k <= max_k` classes.
/// Rows whose top two logits are within `min_gap` are redrawn so the arg-max
/// is stable under small perturbations.
pub fn random_batch(rng: &mut ChaCha8Rng, max_n: usize, max_k: usize, min_gap: f64) -> (Array2<f64>, Vec<usize>) {
    let n = rng.random_range(2..=max_n);
    let k = rng.random_range(2..=max_k);
    // standard-normal logits: larger scales push gradient entries below the
    // finite-difference noise floor of the relative-error metric
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut logits = Array2::zeros((n, k));
    for i in 0..n {
        loop {
            let row: Vec<f64> = (0..k).map(|_| normal.sample(rng)).collect();
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] - sorted[1] >= min_gap {
                for (j, v) in row.into_iter().enumerate() {
                    logits[[i, j]] = v;
                }
                break;
            }
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
    (logits, labels)
}

pub fn summary_of(logits: &Array2<f64>, labels: &[usize]) -> PredictionSummary {
    summarize(&EvalSet::new(logits.clone(), labels.to_vec()).unwrap(), 1.0).unwrap()
}

/// Logits `z ~ N(0, scale^2)` with labels drawn from `softmax(z)`, so the
/// logits are calibrated at temperature 1.
pub fn calibrated_set(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: f64) -> (Array2<f64>, Vec<usize>) {
    let normal = Normal::new(0.0, scale).unwrap();
    let logits = Array2::from_shape_fn((n, k), |_| normal.sample(rng));
    let labels = logits
        .rows()
        .into_iter()
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
            let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
            for (j, &wj) in w.iter().enumerate() {
                if u < wj {
                    return j;
                }
                u -= wj;
            }
            k - 1
        })
        .collect();
    (logits, labels)
}

pub mod gradsuite;
pub mod highprec;
