//! Post-hoc temperature scaling with either a likelihood objective or the
//! soft-binned calibration error as objective.
//!
//! The fit is a bracketed scalar search: a log-spaced coarse grid over the
//! search interval locates the best grid point, then golden-section search
//! refines inside the neighbouring grid cells. Every evaluation is recorded in
//! the trace and the reported temperature is the best point ever evaluated.

use serde::{Deserialize, Serialize};

use crate::binning::SoftBinningSpec;
use crate::data::{summarize, EvalSet, PredictionSummary};
use crate::error::{CalrefError, Result};
use crate::metrics::{evaluation_ece, sb_ece_from_parts, EceMode};
use crate::numeric::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TsObjective {
    Nll,
    SbEce {
        bins: usize,
        /// Temperature of the soft binning, unrelated to the fitted one.
        bin_temperature: f64,
        p: f64,
        mode: EceMode,
    },
}

impl TsObjective {
    /// 15 soft bins at binning temperature 0.01, `p = 2`, label-binned.
    pub fn sb_ece_default() -> Self {
        TsObjective::SbEce {
            bins: 15,
            bin_temperature: 0.01,
            p: 2.0,
            mode: EceMode::LabelBinned,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub t_min: f64,
    pub t_max: f64,
    pub grid_points: usize,
    /// Absolute tolerance on the temperature for the golden-section stage.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            t_min: 0.05,
            t_max: 10.0,
            grid_points: 64,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureFit {
    pub t_star: f64,
    pub objective: TsObjective,
    pub objective_value: f64,
    /// Every `(temperature, objective)` pair evaluated, in evaluation order.
    pub trace: Vec<(f64, f64)>,
    /// Evaluation-convention ECE on the fitting split at `t = 1`.
    pub held_out_ece_before: f64,
    /// Same, at `t_star`.
    pub held_out_ece_after: f64,
}

/// `softmax(logits / t)` and derived quantities. Predictions never change.
pub fn apply_temperature(set: &EvalSet, t: f64) -> Result<PredictionSummary> {
    summarize(set, t)
}

/// Objective of a temperature on a fixed set, with per-row quantities that do
/// not depend on the temperature precomputed once.
struct ObjectiveEval<'a> {
    set: &'a EvalSet,
    objective: TsObjective,
    predicted: Vec<usize>,
    correct: Vec<bool>,
    soft: Option<SoftBinningSpec>,
}

impl<'a> ObjectiveEval<'a> {
    fn new(set: &'a EvalSet, objective: TsObjective) -> Result<Self> {
        let base = summarize(set, 1.0)?;
        let soft = match objective {
            TsObjective::Nll => None,
            TsObjective::SbEce {
                bins,
                bin_temperature,
                p,
                ..
            } => {
                if !(p >= 1.0) {
                    return Err(CalrefError::domain(format!("p must be >= 1, got {p}")));
                }
                Some(SoftBinningSpec::new(bins, bin_temperature)?)
            }
        };
        Ok(Self {
            set,
            objective,
            predicted: base.predicted,
            correct: base.correct,
            soft,
        })
    }

    fn value(&self, t: f64) -> f64 {
        let logits = self.set.logits();
        match self.objective {
            TsObjective::Nll => {
                let terms = logits.rows().into_iter().zip(self.set.labels()).map(|(row, &y)| {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / t;
                    let lse = row.iter().map(|&z| (z / t - max).exp()).sum::<f64>().ln() + max;
                    lse - row[y] / t
                });
                compensated_sum(terms) / self.set.len() as f64
            }
            TsObjective::SbEce { p, mode, .. } => {
                let conf: Vec<f64> = logits
                    .rows()
                    .into_iter()
                    .zip(&self.predicted)
                    .map(|(row, &q)| {
                        let top = row[q] / t;
                        1.0 / row.iter().map(|&z| (z / t - top).exp()).sum::<f64>()
                    })
                    .collect();
                let spec = self.soft.as_ref().expect("soft spec");
                sb_ece_from_parts(&conf, &self.correct, spec, p, mode)
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
            }
        }
    }
}

/// Objective value of temperature `t` on `set`.
pub fn temperature_objective(set: &EvalSet, objective: TsObjective, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(CalrefError::domain(format!("temperature must be positive, got {t}")));
    }
    Ok(ObjectiveEval::new(set, objective)?.value(t))
}

pub fn fit_temperature(val: &EvalSet, objective: TsObjective) -> Result<TemperatureFit> {
    fit_temperature_with(val, objective, &FitOptions::default())
}

pub fn fit_temperature_with(val: &EvalSet, objective: TsObjective, options: &FitOptions) -> Result<TemperatureFit> {
    let FitOptions {
        t_min,
        t_max,
        grid_points,
        tolerance,
    } = *options;
    if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
        return Err(CalrefError::domain(format!(
            "invalid search interval [{t_min}, {t_max}]"
        )));
    }
    if grid_points < 3 || !(tolerance > 0.0) {
        return Err(CalrefError::domain("need >= 3 grid points and a positive tolerance"));
    }
    let eval = ObjectiveEval::new(val, objective)?;
    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut record = |t: f64| {
        let v = eval.value(t);
        trace.push((t, v));
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let ratio = t_max / t_min;
    let grid: Vec<f64> = (0..grid_points)
        .map(|k| t_min * ratio.powf(k as f64 / (grid_points - 1) as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| record(t)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| CalrefError::Fit("objective non-finite at every grid point".into()))?;

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid_points - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = record(x1);
    let mut f2 = record(x2);
    while hi - lo > tolerance {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = record(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = record(x2);
        }
    }
    record(0.5 * (lo + hi));

    let (t_star, objective_value) = trace
        .iter()
        .copied()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one finite grid value");

    Ok(TemperatureFit {
        t_star,
        objective,
        objective_value,
        trace,
        held_out_ece_before: evaluation_ece(&summarize(val, 1.0)?),
        held_out_ece_after: evaluation_ece(&summarize(val, t_star)?),
    })
}
