//! Randomized gradient checks: each function returns the worst relative error
//! over `INSTANCES` random batches (`N <= 64`, `K <= 10`).

use calref::avuc::{avuc, avuc_grad, s_avuc, s_avuc_grad, AvucSpec, SoftAvucSpec};
use calref::binning::SoftBinningSpec;
use calref::gradcheck::{finite_diff_check, relative_error, DEFAULT_STEP};
use calref::losses::{composite_loss, focal, mse, nll, LossSpec, PrimaryLoss, SecondaryLoss};
use calref::metrics::{sb_ece, sb_ece_grad, EceMode};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::highprec::{hp_gradient, SmoothPrimary};
use super::{random_batch, rng, summary_of};

pub const INSTANCES: usize = 100;

fn worst_over_instances<F>(seed: u64, min_gap: f64, mut check: F) -> f64
where
    F: FnMut(&mut ChaCha8Rng, Array2<f64>, Vec<usize>) -> Option<f64>,
{
    let mut r = rng(seed);
    let mut worst = 0.0_f64;
    let mut done = 0;
    while done < INSTANCES {
        let (logits, labels) = random_batch(&mut r, 64, 10, min_gap);
        // `None` means the batch is degenerate for this loss and is redrawn
        if let Some(err) = check(&mut r, logits, labels) {
            worst = worst.max(err);
            done += 1;
        }
    }
    worst
}

/// NLL against f64 central differences.
pub fn nll_f64(seed: u64) -> f64 {
    worst_over_instances(seed, 0.0, |_, z, y| {
        let g = nll(&summary_of(&z, &y)).grad;
        Some(finite_diff_check(
            |x| nll(&summary_of(x, &y)).value,
            &z,
            &g,
            DEFAULT_STEP,
        ))
    })
}

/// A smooth primary against extended-precision central differences.
pub fn smooth_primary(seed: u64, loss: SmoothPrimary) -> f64 {
    worst_over_instances(seed, 0.0, |_, z, y| {
        let s = summary_of(&z, &y);
        let g = match loss {
            SmoothPrimary::Nll => nll(&s).grad,
            SmoothPrimary::Focal(gamma) => focal(&s, gamma).grad,
            SmoothPrimary::Mse => mse(&s).grad,
        };
        let reference = hp_gradient(&z, &y, loss);
        Some(
            g.iter()
                .zip(reference.iter())
                .map(|(&a, &n)| relative_error(a, n))
                .fold(0.0, f64::max),
        )
    })
}

pub fn sb_ece_family(seed: u64, mode: EceMode) -> f64 {
    worst_over_instances(seed, 1e-3, |r, z, y| {
        let bins = r.random_range(1..=15);
        let spec = SoftBinningSpec::new(bins, r.random_range(0.005..0.2)).unwrap();
        let g = sb_ece_grad(&summary_of(&z, &y), &spec, 2.0, mode).unwrap();
        Some(finite_diff_check(
            |x| sb_ece(&summary_of(x, &y), &spec, 2.0, mode).unwrap().value,
            &z,
            &g,
            DEFAULT_STEP,
        ))
    })
}

/// Redraws kappa until no example's entropy sits within `margin` of it.
fn draw_kappa(r: &mut ChaCha8Rng, entropy: &[f64], lo: f64, hi: f64, margin: f64) -> f64 {
    loop {
        let k = r.random_range(lo..hi);
        if entropy.iter().all(|h| (h - k).abs() > margin) {
            return k;
        }
    }
}

/// Hard AvUC written out with the confidence multiplicands taken from `frozen`
/// instead of the current logits.
pub fn avuc_with_frozen_conf(logits: &Array2<f64>, labels: &[usize], frozen: &[f64], kappa: f64) -> f64 {
    let s = summary_of(logits, labels);
    let (mut num, mut den) = (0.0, 0.0);
    for ((&h, &a), &c) in s.entropy.iter().zip(&s.correct).zip(frozen) {
        let th = h.tanh();
        match (a, h <= kappa) {
            (true, true) => den += c * (1.0 - th),
            (true, false) => num += c * th,
            (false, true) => num += (1.0 - c) * (1.0 - th),
            (false, false) => den += (1.0 - c) * th,
        }
    }
    (num / den).ln_1p()
}

/// Plain AvUC against its own value; with `stopping`, against the value with
/// the confidence multiplicands frozen.
pub fn avuc_family(seed: u64, stopping: bool) -> f64 {
    worst_over_instances(seed, 1e-3, |r, z, y| {
        let s = summary_of(&z, &y);
        let ln_k = (s.num_classes() as f64).ln();
        let kappa = draw_kappa(r, &s.entropy, 0.1 * ln_k, 0.9 * ln_k, 1e-3);
        let spec = AvucSpec {
            kappa,
            gradient_stopping: stopping,
        };
        let g = avuc_grad(&s, &spec).ok()?;
        Some(if stopping {
            let frozen = s.confidence.clone();
            finite_diff_check(|x| avuc_with_frozen_conf(x, &y, &frozen, kappa), &z, &g, DEFAULT_STEP)
        } else {
            finite_diff_check(|x| avuc(&summary_of(x, &y), &spec).unwrap().value, &z, &g, DEFAULT_STEP)
        })
    })
}

pub fn s_avuc_family(seed: u64) -> f64 {
    worst_over_instances(seed, 1e-3, |r, z, y| {
        let spec = SoftAvucSpec {
            kappa: r.random_range(0.05..0.95),
            temperature: r.random_range(0.2..3.0),
        };
        let s = summary_of(&z, &y);
        let g = s_avuc_grad(&s, &spec).ok()?;
        Some(finite_diff_check(
            |x| s_avuc(&summary_of(x, &y), &spec).unwrap().value,
            &z,
            &g,
            DEFAULT_STEP,
        ))
    })
}

/// Focal primary plus weighted S-AvUC plus the L2 term.
pub fn composite_family(seed: u64) -> f64 {
    worst_over_instances(seed, 1e-3, |r, z, y| {
        let spec = LossSpec {
            primary: PrimaryLoss::Focal { gamma: 3.0 },
            secondary: SecondaryLoss::SAvuc {
                kappa: r.random_range(0.1..0.9),
                temperature: r.random_range(0.3..2.0),
            },
            beta: r.random_range(0.1..5.0),
            lambda: 1e-3,
        };
        let g = composite_loss(&z, &y, &spec, 1.7).ok()?;
        Some(finite_diff_check(
            |x| composite_loss(x, &y, &spec, 1.7).unwrap().value,
            &z,
            &g.grad_logits,
            DEFAULT_STEP,
        ))
    })
}
