//! Hard binned / label-binned calibration error, their soft-binned
//! counterparts, and reliability-diagram data.
//!
//! Every estimator is a function of per-example confidences `c_i` and
//! accuracy indicators `a_i` only. The `*_from_parts` variants take those
//! slices directly; the summary-taking wrappers pull them from a
//! [`PredictionSummary`].

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::binning::{assign_hard, BinningScheme, BinningSpec, SoftBinningSpec};
use crate::data::PredictionSummary;
use crate::error::{CalrefError, Result};
use crate::numeric::{abs_pow_deriv, compensated_sum};

/// Soft bin sizes are floored here before any division.
pub const SOFT_SIZE_FLOOR: f64 = 1e-30;

/// Bin count of the default evaluation convention.
pub const EVAL_BINS: usize = 15;
/// Norm order of the default evaluation convention.
pub const EVAL_P: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EceMode {
    /// Bin-weighted `|A_j - C_j|^p`.
    Binned,
    /// Per-example `|A_{b_i} - c_i|^p`.
    LabelBinned,
}

/// Per-bin size, mean confidence and mean accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinStats {
    pub size: Vec<f64>,
    /// `None` for empty hard bins.
    pub mean_conf: Vec<Option<f64>>,
    pub mean_acc: Vec<Option<f64>>,
}

impl BinStats {
    pub fn bins(&self) -> usize {
        self.size.len()
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.size.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Binning {
    Hard(BinningSpec),
    Soft(SoftBinningSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EceReport {
    /// Calibration error in `[0, 1]`.
    pub value: f64,
    pub p: f64,
    pub mode: EceMode,
    pub binning: Binning,
    pub bin_stats: BinStats,
    pub n: usize,
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(CalrefError::domain(format!("norm order p must be >= 1, got {p}")))
    }
}

fn check_parts(conf: &[f64], correct: &[bool]) -> Result<()> {
    if conf.len() != correct.len() {
        return Err(CalrefError::domain(format!(
            "{} confidences but {} accuracy flags",
            conf.len(),
            correct.len()
        )));
    }
    Ok(())
}

fn indicator(a: bool) -> f64 {
    if a {
        1.0
    } else {
        0.0
    }
}

pub fn bin_stats_hard_from_parts(conf: &[f64], correct: &[bool], spec: &BinningSpec) -> Result<BinStats> {
    check_parts(conf, correct)?;
    let assignment = assign_hard(conf, spec)?;
    Ok(hard_stats(conf, correct, &assignment.bin_index, spec.bins))
}

fn hard_stats(conf: &[f64], correct: &[bool], bin_index: &[usize], m: usize) -> BinStats {
    let mut conf_terms: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut acc_terms: Vec<Vec<f64>> = vec![Vec::new(); m];
    for ((&c, &a), &b) in conf.iter().zip(correct).zip(bin_index) {
        conf_terms[b].push(c);
        acc_terms[b].push(indicator(a));
    }
    let size: Vec<f64> = conf_terms.iter().map(|v| v.len() as f64).collect();
    let mean =
        |terms: &Vec<f64>| (!terms.is_empty()).then(|| compensated_sum(terms.iter().copied()) / terms.len() as f64);
    BinStats {
        size,
        mean_conf: conf_terms.iter().map(mean).collect(),
        mean_acc: acc_terms.iter().map(mean).collect(),
    }
}

/// Count, mean confidence and mean accuracy per hard bin.
pub fn bin_stats_hard(summary: &PredictionSummary, spec: &BinningSpec) -> Result<BinStats> {
    bin_stats_hard_from_parts(&summary.confidence, &summary.correct, spec)
}

/// Memberships `u_ij` for every example, row-major `N x M`.
fn memberships(conf: &[f64], spec: &SoftBinningSpec) -> Vec<f64> {
    let m = spec.bins;
    let mut u = vec![0.0; conf.len() * m];
    for (i, &c) in conf.iter().enumerate() {
        spec.membership_into(c, &mut u[i * m..(i + 1) * m]);
    }
    u
}

fn soft_stats_from_memberships(conf: &[f64], correct: &[bool], u: &[f64], m: usize) -> BinStats {
    let mut size = Vec::with_capacity(m);
    let mut mean_conf = Vec::with_capacity(m);
    let mut mean_acc = Vec::with_capacity(m);
    for j in 0..m {
        let col = || (0..conf.len()).map(move |i| u[i * m + j]);
        let s = compensated_sum(col());
        let sc = compensated_sum(col().zip(conf).map(|(w, &c)| w * c));
        let sa = compensated_sum(col().zip(correct).map(|(w, &a)| w * indicator(a)));
        let denom = s.max(SOFT_SIZE_FLOOR);
        size.push(s);
        mean_conf.push(Some(sc / denom));
        mean_acc.push(Some(sa / denom));
    }
    BinStats {
        size,
        mean_conf,
        mean_acc,
    }
}

pub fn bin_stats_soft_from_parts(conf: &[f64], correct: &[bool], spec: &SoftBinningSpec) -> Result<BinStats> {
    check_parts(conf, correct)?;
    spec.validate()?;
    check_unit_interval(conf)?;
    let u = memberships(conf, spec);
    Ok(soft_stats_from_memberships(conf, correct, &u, spec.bins))
}

/// Soft bin statistics: sizes `sum_i u_j(c_i)` and membership-weighted means.
pub fn bin_stats_soft(summary: &PredictionSummary, spec: &SoftBinningSpec) -> Result<BinStats> {
    bin_stats_soft_from_parts(&summary.confidence, &summary.correct, spec)
}

fn check_unit_interval(conf: &[f64]) -> Result<()> {
    match conf.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        Some(c) => Err(CalrefError::domain(format!("confidence {c} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn binned_value(stats: &BinStats, n: usize, p: f64) -> f64 {
    let q = compensated_sum((0..stats.bins()).filter_map(|j| {
        let (c, a) = (stats.mean_conf[j]?, stats.mean_acc[j]?);
        Some(stats.size[j] / n as f64 * (a - c).abs().powf(p))
    }));
    q.max(0.0).powf(1.0 / p)
}

pub fn ece_from_parts(conf: &[f64], correct: &[bool], spec: &BinningSpec, p: f64, mode: EceMode) -> Result<EceReport> {
    check_p(p)?;
    check_parts(conf, correct)?;
    let assignment = assign_hard(conf, spec)?;
    let stats = hard_stats(conf, correct, &assignment.bin_index, spec.bins);
    let n = conf.len();
    let value = if n == 0 {
        0.0
    } else {
        match mode {
            EceMode::Binned => binned_value(&stats, n, p),
            EceMode::LabelBinned => {
                let q = compensated_sum(conf.iter().zip(&assignment.bin_index).map(|(&c, &b)| {
                    let a = stats.mean_acc[b].expect("occupied bin");
                    (a - c).abs().powf(p)
                }));
                (q / n as f64).powf(1.0 / p)
            }
        }
    };
    Ok(EceReport {
        value,
        p,
        mode,
        binning: Binning::Hard(*spec),
        bin_stats: stats,
        n,
    })
}

/// Hard-binned expected calibration error of order `p`.
pub fn ece(summary: &PredictionSummary, spec: &BinningSpec, p: f64, mode: EceMode) -> Result<EceReport> {
    ece_from_parts(&summary.confidence, &summary.correct, spec, p, mode)
}

/// Equal-mass, 15-bin, `p = 2`, binned ECE: the convention every reported
/// number in this crate uses unless told otherwise.
pub fn evaluation_ece(summary: &PredictionSummary) -> f64 {
    let spec = BinningSpec::new(BinningScheme::EqualMass, EVAL_BINS).expect("valid");
    ece(summary, &spec, EVAL_P, EceMode::Binned)
        .expect("summary confidences lie in [0, 1]")
        .value
}

/// Soft-binned calibration error and its derivative with respect to each
/// confidence `c_i` (accuracy indicators held fixed).
#[derive(Debug, Clone)]
pub struct SoftEceGrad {
    pub value: f64,
    pub d_conf: Vec<f64>,
}

pub fn sb_ece_from_parts(
    conf: &[f64],
    correct: &[bool],
    spec: &SoftBinningSpec,
    p: f64,
    mode: EceMode,
) -> Result<EceReport> {
    check_p(p)?;
    check_parts(conf, correct)?;
    spec.validate()?;
    check_unit_interval(conf)?;
    let m = spec.bins;
    let n = conf.len();
    let u = memberships(conf, spec);
    let stats = soft_stats_from_memberships(conf, correct, &u, m);
    let value = if n == 0 {
        0.0
    } else {
        match mode {
            EceMode::Binned => binned_value(&stats, n, p),
            EceMode::LabelBinned => {
                let acc: Vec<f64> = stats.mean_acc.iter().map(|a| a.unwrap_or(0.0)).collect();
                let q = compensated_sum(conf.iter().enumerate().flat_map(|(i, &c)| {
                    let row = &u[i * m..(i + 1) * m];
                    row.iter().zip(&acc).map(move |(&w, &a)| w * (a - c).abs().powf(p))
                }));
                (q / n as f64).max(0.0).powf(1.0 / p)
            }
        }
    };
    Ok(EceReport {
        value,
        p,
        mode,
        binning: Binning::Soft(spec.clone()),
        bin_stats: stats,
        n,
    })
}

/// Soft-binned expected calibration error of order `p`.
pub fn sb_ece(summary: &PredictionSummary, spec: &SoftBinningSpec, p: f64, mode: EceMode) -> Result<EceReport> {
    sb_ece_from_parts(&summary.confidence, &summary.correct, spec, p, mode)
}

/// Value and exact `d SB-ECE / d c_i`.
///
/// With `S_j`, `C_j`, `A_j` the soft statistics, `u_ij` memberships and
/// `u'_ij` their slopes in `c_i`:
///
/// * binned: `dQ/dc_i = (1/N) sum_j [ u'_ij |D_j|^p + psi(D_j) (u'_ij (a_i - c_i - D_j) - u_ij) ]`
///   with `D_j = A_j - C_j` and `psi` the derivative of `|x|^p`;
/// * label-binned: `dQ/dc_k = (1/N) sum_j [ u'_kj |R_kj|^p - u_kj psi(R_kj)
///   + W_j u'_kj (a_k - A_j) / S_j ]` with `R_ij = A_j - c_i` and
///   `W_j = sum_i u_ij psi(R_ij)`.
///
/// The value is `Q^(1/p)`, so the gradient is scaled by `Q^(1/p - 1) / p`;
/// at `Q = 0` (global minimum) the gradient is reported as zero.
pub fn sb_ece_conf_grad(
    conf: &[f64],
    correct: &[bool],
    spec: &SoftBinningSpec,
    p: f64,
    mode: EceMode,
) -> Result<SoftEceGrad> {
    check_p(p)?;
    check_parts(conf, correct)?;
    spec.validate()?;
    check_unit_interval(conf)?;
    let m = spec.bins;
    let n = conf.len();
    if n == 0 {
        return Ok(SoftEceGrad {
            value: 0.0,
            d_conf: Vec::new(),
        });
    }
    let nf = n as f64;
    let mut u = vec![0.0; n * m];
    let mut du = vec![0.0; n * m];
    for (i, &c) in conf.iter().enumerate() {
        spec.membership_with_grad(c, &mut u[i * m..(i + 1) * m], &mut du[i * m..(i + 1) * m]);
    }
    let stats = soft_stats_from_memberships(conf, correct, &u, m);
    let size: Vec<f64> = stats.size.iter().map(|s| s.max(SOFT_SIZE_FLOOR)).collect();
    let mean_c: Vec<f64> = stats.mean_conf.iter().map(|v| v.unwrap_or(0.0)).collect();
    let mean_a: Vec<f64> = stats.mean_acc.iter().map(|v| v.unwrap_or(0.0)).collect();

    let mut d_q = vec![0.0; n];
    let q = match mode {
        EceMode::Binned => {
            let gap: Vec<f64> = (0..m).map(|j| mean_a[j] - mean_c[j]).collect();
            let gap_pow: Vec<f64> = gap.iter().map(|d| d.abs().powf(p)).collect();
            let gap_psi: Vec<f64> = gap.iter().map(|&d| abs_pow_deriv(d, p)).collect();
            for (i, dqi) in d_q.iter_mut().enumerate() {
                let (c, a) = (conf[i], indicator(correct[i]));
                let mut acc = 0.0;
                for j in 0..m {
                    let (w, dw) = (u[i * m + j], du[i * m + j]);
                    acc += dw * gap_pow[j] + gap_psi[j] * (dw * (a - c - gap[j]) - w);
                }
                *dqi = acc / nf;
            }
            compensated_sum((0..m).map(|j| stats.size[j] / nf * gap_pow[j]))
        }
        EceMode::LabelBinned => {
            let mut weight = vec![0.0; m];
            let mut q_terms = Vec::with_capacity(n * m);
            for (i, &c) in conf.iter().enumerate() {
                for j in 0..m {
                    let r = mean_a[j] - c;
                    q_terms.push(u[i * m + j] * r.abs().powf(p));
                    weight[j] += u[i * m + j] * abs_pow_deriv(r, p);
                }
            }
            for (k, dqk) in d_q.iter_mut().enumerate() {
                let (c, a) = (conf[k], indicator(correct[k]));
                let mut acc = 0.0;
                for j in 0..m {
                    let r = mean_a[j] - c;
                    let (w, dw) = (u[k * m + j], du[k * m + j]);
                    acc += dw * r.abs().powf(p) - w * abs_pow_deriv(r, p) + weight[j] * dw * (a - mean_a[j]) / size[j];
                }
                *dqk = acc / nf;
            }
            compensated_sum(q_terms) / nf
        }
    };
    let q = q.max(0.0);
    let value = q.powf(1.0 / p);
    let outer = if q > 0.0 { value / (p * q) } else { 0.0 };
    let d_conf = d_q.into_iter().map(|d| d * outer).collect();
    Ok(SoftEceGrad { value, d_conf })
}

/// Gradient of soft-binned ECE with respect to every logit entry. Flows only
/// through each row's arg-max probability; accuracy is a constant.
pub fn sb_ece_grad(summary: &PredictionSummary, spec: &SoftBinningSpec, p: f64, mode: EceMode) -> Result<Array2<f64>> {
    let g = sb_ece_conf_grad(&summary.confidence, &summary.correct, spec, p, mode)?;
    Ok(summary.logit_grad(&g.d_conf, None))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityRow {
    pub bin: usize,
    pub mean_conf: Option<f64>,
    pub mean_acc: Option<f64>,
    /// Fraction of examples in this bin.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityTable {
    pub rows: Vec<ReliabilityRow>,
    pub overall_conf: f64,
    pub overall_acc: f64,
}

pub fn reliability_table_from_parts(conf: &[f64], correct: &[bool], spec: &BinningSpec) -> Result<ReliabilityTable> {
    let stats = bin_stats_hard_from_parts(conf, correct, spec)?;
    let n = conf.len().max(1) as f64;
    let rows = (0..spec.bins)
        .map(|j| ReliabilityRow {
            bin: j,
            mean_conf: stats.mean_conf[j],
            mean_acc: stats.mean_acc[j],
            weight: stats.size[j] / n,
        })
        .collect();
    Ok(ReliabilityTable {
        rows,
        overall_conf: compensated_sum(conf.iter().copied()) / n,
        overall_acc: compensated_sum(correct.iter().map(|&a| indicator(a))) / n,
    })
}

/// One row per bin (empty bins included) for reliability diagrams.
pub fn reliability_table(summary: &PredictionSummary, spec: &BinningSpec) -> Result<ReliabilityTable> {
    reliability_table_from_parts(&summary.confidence, &summary.correct, spec)
}
