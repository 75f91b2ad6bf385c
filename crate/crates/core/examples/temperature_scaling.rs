//! Fit a single temperature on a validation split with either objective and
//! compare held-out calibration error.

use calref::metrics::evaluation_ece;
use calref::recalibration::{fit_temperature, TsObjective};
use calref::{summarize, EvalSet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Labels drawn from `softmax(z)` (10% replaced at random), logits `2z`.
fn split(rng: &mut ChaCha8Rng, n: usize, k: usize) -> calref::Result<EvalSet> {
    let normal = Normal::new(0.0, 3.0).unwrap();
    let z = Array2::from_shape_fn((n, k), |_| normal.sample(rng));
    let mut labels = Vec::with_capacity(n);
    for row in z.rows() {
        let label = if rng.random::<f64>() < 0.1 {
            rng.random_range(0..k)
        } else {
            let p = calref::numeric::softmax(row.as_slice().unwrap());
            let mut u: f64 = rng.random();
            p.iter()
                .position(|&pj| {
                    u -= pj;
                    u < 0.0
                })
                .unwrap_or(k - 1)
        };
        labels.push(label);
    }
    EvalSet::new(z * 2.0, labels)
}

fn main() -> calref::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let val = split(&mut rng, 5000, 10)?;
    let test = split(&mut rng, 5000, 10)?;
    println!("uncalibrated test ECE {:.4}", evaluation_ece(&summarize(&test, 1.0)?));
    for objective in [TsObjective::Nll, TsObjective::sb_ece_default()] {
        let fit = fit_temperature(&val, objective)?;
        let after = evaluation_ece(&summarize(&test, fit.t_star)?);
        println!(
            "{objective:?}: t* = {:.3} after {} evaluations, test ECE {after:.4}",
            fit.t_star,
            fit.trace.len()
        );
    }
    Ok(())
}
