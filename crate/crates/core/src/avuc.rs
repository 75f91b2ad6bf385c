//! Accuracy-versus-uncertainty losses: hard AvUC (optionally with stopped
//! gradients through the confidence multiplicands) and the soft variant
//! built on a logistic soft-uncertainty function of normalized entropy.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::PredictionSummary;
use crate::error::{CalrefError, Result};
use crate::numeric::{compensated_sum, logistic};

/// Hard AvUC parameters. `kappa` is a raw entropy threshold in nats:
/// `h <= kappa` is certain, `h > kappa` is uncertain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvucSpec {
    pub kappa: f64,
    /// Treat the `c_i` / `1 - c_i` multiplicands as constants when
    /// differentiating.
    pub gradient_stopping: bool,
}

/// Soft AvUC parameters. `kappa` is a threshold on normalized entropy in
/// `(0, 1)`; `temperature` sets how sharp the soft threshold is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftAvucSpec {
    pub kappa: f64,
    pub temperature: f64,
}

impl AvucSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let max = (num_classes as f64).ln();
        if !(self.kappa > 0.0 && self.kappa < max) {
            return Err(CalrefError::domain(format!(
                "AvUC threshold must lie in (0, ln K = {max}), got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

impl SoftAvucSpec {
    pub fn validate(&self) -> Result<()> {
        check_soft_params(self.kappa, self.temperature)
    }
}

fn check_soft_params(kappa: f64, temperature: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(CalrefError::domain(format!(
            "soft-uncertainty threshold must lie in (0, 1), got {kappa}"
        )));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(CalrefError::domain(format!(
            "soft-uncertainty temperature must be positive, got {temperature}"
        )));
    }
    Ok(())
}

/// Relaxed category counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AvucCounts {
    pub n_ac: f64,
    pub n_au: f64,
    pub n_ic: f64,
    pub n_iu: f64,
}

impl AvucCounts {
    fn numerator(&self) -> f64 {
        self.n_au + self.n_ic
    }

    fn denominator(&self) -> f64 {
        self.n_ac + self.n_iu
    }

    fn loss(&self) -> Result<f64> {
        let den = self.denominator();
        if !(den > 0.0) {
            return Err(CalrefError::DegenerateBatch(
                "no accurate-certain or inaccurate-uncertain mass".into(),
            ));
        }
        Ok((self.numerator() / den).ln_1p())
    }

    /// `(dL/d numerator, dL/d denominator)`.
    fn partials(&self) -> (f64, f64) {
        let total = self.numerator() + self.denominator();
        (1.0 / total, 1.0 / total - 1.0 / self.denominator())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvucValue {
    pub value: f64,
    pub counts: AvucCounts,
}

/// Logistic of the temperature-scaled log-odds of `h*` against `kappa`.
///
/// Evaluated without clamping: `h* = 0` and `h* = 1` map to exactly 0 and 1
/// through the infinite log-odds.
pub fn soft_uncertainty(hstar: f64, kappa: f64, temperature: f64) -> Result<f64> {
    check_soft_params(kappa, temperature)?;
    if !(0.0..=1.0).contains(&hstar) {
        return Err(CalrefError::domain(format!(
            "normalized entropy {hstar} outside [0, 1]"
        )));
    }
    Ok(soft_uncertainty_unchecked(hstar, kappa, temperature))
}

fn soft_uncertainty_unchecked(hstar: f64, kappa: f64, temperature: f64) -> f64 {
    let log_odds = (hstar * (1.0 - kappa) / ((1.0 - hstar) * kappa)).ln();
    logistic(log_odds / temperature)
}

/// `dt/dh* = t (1 - t) / (T h* (1 - h*))`, zero where `t` saturates.
fn soft_uncertainty_slope(t: f64, hstar: f64, temperature: f64) -> f64 {
    let s = t * (1.0 - t);
    if s == 0.0 {
        0.0
    } else {
        s / (temperature * hstar * (1.0 - hstar))
    }
}

fn check_lengths(conf: &[f64], entropy: &[f64], correct: &[bool]) -> Result<()> {
    if conf.len() != entropy.len() || conf.len() != correct.len() {
        return Err(CalrefError::domain("mismatched per-example vector lengths"));
    }
    Ok(())
}

/// Per-example hard AvUC term and its partials in `c` and `h`.
struct HardTerm {
    to_numerator: bool,
    value: f64,
    d_conf: f64,
    d_entropy: f64,
}

fn hard_term(c: f64, h: f64, accurate: bool, kappa: f64) -> HardTerm {
    let th = h.tanh();
    let sech2 = 1.0 - th * th;
    let certain = h <= kappa;
    match (accurate, certain) {
        (true, true) => HardTerm {
            to_numerator: false,
            value: c * (1.0 - th),
            d_conf: 1.0 - th,
            d_entropy: -c * sech2,
        },
        (true, false) => HardTerm {
            to_numerator: true,
            value: c * th,
            d_conf: th,
            d_entropy: c * sech2,
        },
        (false, true) => HardTerm {
            to_numerator: true,
            value: (1.0 - c) * (1.0 - th),
            d_conf: -(1.0 - th),
            d_entropy: -(1.0 - c) * sech2,
        },
        (false, false) => HardTerm {
            to_numerator: false,
            value: (1.0 - c) * th,
            d_conf: -th,
            d_entropy: (1.0 - c) * sech2,
        },
    }
}

pub fn avuc_counts_from_parts(conf: &[f64], entropy: &[f64], correct: &[bool], kappa: f64) -> Result<AvucCounts> {
    check_lengths(conf, entropy, correct)?;
    let terms: Vec<(bool, bool, f64)> = conf
        .iter()
        .zip(entropy)
        .zip(correct)
        .map(|((&c, &h), &a)| {
            let t = hard_term(c, h, a, kappa);
            (a, h <= kappa, t.value)
        })
        .collect();
    let pick = |acc: bool, cert: bool| compensated_sum(terms.iter().filter(|t| t.0 == acc && t.1 == cert).map(|t| t.2));
    Ok(AvucCounts {
        n_ac: pick(true, true),
        n_au: pick(true, false),
        n_ic: pick(false, true),
        n_iu: pick(false, false),
    })
}

/// Hard AvUC from raw confidences, entropies (nats) and accuracy flags.
pub fn avuc_from_parts(conf: &[f64], entropy: &[f64], correct: &[bool], kappa: f64) -> Result<AvucValue> {
    let counts = avuc_counts_from_parts(conf, entropy, correct, kappa)?;
    Ok(AvucValue {
        value: counts.loss()?,
        counts,
    })
}

/// `log(1 + (n_AU + n_IC) / (n_AC + n_IU))` with the categories fixed by
/// accuracy and by entropy against the threshold.
pub fn avuc(summary: &PredictionSummary, spec: &AvucSpec) -> Result<AvucValue> {
    spec.validate(summary.num_classes())?;
    avuc_from_parts(&summary.confidence, &summary.entropy, &summary.correct, spec.kappa)
}

/// Per-example `dL/dc_i` and `dL/dh_i` for hard AvUC.
pub fn avuc_sensitivities(
    conf: &[f64],
    entropy: &[f64],
    correct: &[bool],
    spec: &AvucSpec,
) -> Result<(AvucValue, Vec<f64>, Vec<f64>)> {
    let out = avuc_from_parts(conf, entropy, correct, spec.kappa)?;
    let (d_num, d_den) = out.counts.partials();
    let mut d_conf = Vec::with_capacity(conf.len());
    let mut d_ent = Vec::with_capacity(conf.len());
    for ((&c, &h), &a) in conf.iter().zip(entropy).zip(correct) {
        let t = hard_term(c, h, a, spec.kappa);
        let w = if t.to_numerator { d_num } else { d_den };
        d_conf.push(if spec.gradient_stopping { 0.0 } else { w * t.d_conf });
        d_ent.push(w * t.d_entropy);
    }
    Ok((out, d_conf, d_ent))
}

/// Logit gradient of AvUC or, with `gradient_stopping`, of AvUC-GS.
pub fn avuc_grad(summary: &PredictionSummary, spec: &AvucSpec) -> Result<Array2<f64>> {
    spec.validate(summary.num_classes())?;
    let (_, dc, dh) = avuc_sensitivities(&summary.confidence, &summary.entropy, &summary.correct, spec)?;
    Ok(summary.logit_grad(&dc, Some(&dh)))
}

pub fn s_avuc_counts_from_parts(
    entropy: &[f64],
    norm_entropy: &[f64],
    correct: &[bool],
    spec: &SoftAvucSpec,
) -> Result<AvucCounts> {
    spec.validate()?;
    if entropy.len() != norm_entropy.len() || entropy.len() != correct.len() {
        return Err(CalrefError::domain("mismatched per-example vector lengths"));
    }
    let mut au = Vec::new();
    let mut ac = Vec::new();
    let mut ic = Vec::new();
    let mut iu = Vec::new();
    for ((&h, &hs), &a) in entropy.iter().zip(norm_entropy).zip(correct) {
        let t = soft_uncertainty(hs, spec.kappa, spec.temperature)?;
        let th = h.tanh();
        if a {
            au.push(t * th);
            ac.push((1.0 - t) * (1.0 - th));
        } else {
            ic.push((1.0 - t) * (1.0 - th));
            iu.push(t * th);
        }
    }
    Ok(AvucCounts {
        n_ac: compensated_sum(ac),
        n_au: compensated_sum(au),
        n_ic: compensated_sum(ic),
        n_iu: compensated_sum(iu),
    })
}

pub fn s_avuc_from_parts(
    entropy: &[f64],
    norm_entropy: &[f64],
    correct: &[bool],
    spec: &SoftAvucSpec,
) -> Result<AvucValue> {
    let counts = s_avuc_counts_from_parts(entropy, norm_entropy, correct, spec)?;
    Ok(AvucValue {
        value: counts.loss()?,
        counts,
    })
}

/// Soft AvUC: categories split by accuracy only, certain/uncertain mass
/// weighted by the soft uncertainty of the normalized entropy.
pub fn s_avuc(summary: &PredictionSummary, spec: &SoftAvucSpec) -> Result<AvucValue> {
    s_avuc_from_parts(&summary.entropy, &summary.norm_entropy, &summary.correct, spec)
}

/// Value and per-example `dL/dh_i` (entropy in nats) for soft AvUC.
pub fn s_avuc_sensitivities(summary: &PredictionSummary, spec: &SoftAvucSpec) -> Result<(AvucValue, Vec<f64>)> {
    let out = s_avuc(summary, spec)?;
    let (d_num, d_den) = out.counts.partials();
    let ln_k = (summary.num_classes() as f64).ln();
    let d_ent = summary
        .entropy
        .iter()
        .zip(&summary.norm_entropy)
        .zip(&summary.correct)
        .map(|((&h, &hs), &a)| {
            let t = soft_uncertainty_unchecked(hs, spec.kappa, spec.temperature);
            let dt = soft_uncertainty_slope(t, hs, spec.temperature) / ln_k;
            let th = h.tanh();
            let sech2 = 1.0 - th * th;
            // uncertain-weighted term t*tanh(h) and certain-weighted (1-t)(1-tanh(h))
            let d_uncertain = dt * th + t * sech2;
            let d_certain = -dt * (1.0 - th) - (1.0 - t) * sech2;
            if a {
                d_num * d_uncertain + d_den * d_certain
            } else {
                d_num * d_certain + d_den * d_uncertain
            }
        })
        .collect();
    Ok((out, d_ent))
}

pub fn s_avuc_grad(summary: &PredictionSummary, spec: &SoftAvucSpec) -> Result<Array2<f64>> {
    let (_, d_ent) = s_avuc_sensitivities(summary, spec)?;
    let zeros = vec![0.0; summary.len()];
    Ok(summary.logit_grad(&zeros, Some(&d_ent)))
}
