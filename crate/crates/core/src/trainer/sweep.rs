//! One-at-a-time hyperparameter sweep with the accuracy-band selection rule.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{CalrefError, Result};
use crate::losses::{LossSpec, SecondaryLoss};

/// Relative accuracy band inside which the lowest calibration error wins.
pub const ACCURACY_BAND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Kappa,
    Temperature,
    Beta,
    Lambda,
}

pub const SWEEP_ORDER: [SweepParam; 4] = [
    SweepParam::Kappa,
    SweepParam::Temperature,
    SweepParam::Beta,
    SweepParam::Lambda,
];

/// Candidate values per hyperparameter. An empty list leaves that parameter
/// at its baseline value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub kappa: Vec<f64>,
    pub temperature: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SweepGrid {
    pub fn values(&self, param: SweepParam) -> &[f64] {
        match param {
            SweepParam::Kappa => &self.kappa,
            SweepParam::Temperature => &self.temperature,
            SweepParam::Beta => &self.beta,
            SweepParam::Lambda => &self.lambda,
        }
    }
}

/// Sets one hyperparameter of a loss specification. `Temperature` means the
/// secondary loss's own temperature (soft binning or soft uncertainty).
pub fn with_param(loss: &LossSpec, param: SweepParam, value: f64) -> Result<LossSpec> {
    let mut out = *loss;
    let missing = || {
        CalrefError::Config(format!(
            "secondary loss {:?} has no {param:?} parameter",
            loss.secondary
        ))
    };
    match param {
        SweepParam::Beta => out.beta = value,
        SweepParam::Lambda => out.lambda = value,
        SweepParam::Kappa => match &mut out.secondary {
            SecondaryLoss::SAvuc { kappa, .. } | SecondaryLoss::Avuc { kappa } | SecondaryLoss::AvucGs { kappa } => {
                *kappa = value
            }
            _ => return Err(missing()),
        },
        SweepParam::Temperature => match &mut out.secondary {
            SecondaryLoss::SAvuc { temperature, .. } | SecondaryLoss::SbEce { temperature, .. } => *temperature = value,
            _ => return Err(missing()),
        },
    }
    out.validate()?;
    Ok(out)
}

/// Validation scores of one trained configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub val_accuracy: f64,
    pub val_ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub stage: usize,
    pub param: SweepParam,
    pub value: f64,
    pub val_accuracy: Option<f64>,
    pub val_ece: Option<f64>,
    pub diverged: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub selected: TrainConfig,
    pub rows: Vec<SweepRow>,
}

/// Index of the lowest-ECE candidate among those whose accuracy is within
/// 1% (relative) of the best accuracy. Ties go to the earliest candidate.
pub fn select_within_accuracy_band(candidates: &[Option<SweepOutcome>]) -> Option<usize> {
    let best = candidates
        .iter()
        .flatten()
        .map(|o| o.val_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = best * (1.0 - ACCURACY_BAND);
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.filter(|o| o.val_accuracy >= floor).map(|o| (i, o.val_ece)))
        .fold(None, |acc: Option<(usize, f64)>, (i, e)| match acc {
            Some((_, best_e)) if best_e <= e => acc,
            _ => Some((i, e)),
        })
        .map(|(i, _)| i)
}

/// Tunes kappa, temperature, beta and lambda in that order, keeping the value
/// selected at each stage while sweeping the next. `train_fn` trains one
/// configuration and reports validation scores; divergence marks the row and
/// excludes it. Identical configurations are trained once.
pub fn sweep_one_at_a_time<F>(baseline: &TrainConfig, grid: &SweepGrid, mut train_fn: F) -> Result<SweepResult>
where
    F: FnMut(&TrainConfig) -> Result<SweepOutcome>,
{
    baseline.validate()?;
    for param in SWEEP_ORDER {
        for &v in grid.values(param) {
            with_param(&baseline.loss, param, v)?;
        }
    }
    let mut current = baseline.clone();
    let mut rows = Vec::new();
    let mut cache: HashMap<String, Option<SweepOutcome>> = HashMap::new();
    let mut any_ok = false;

    for (stage, param) in SWEEP_ORDER.into_iter().enumerate() {
        let values = grid.values(param);
        if values.is_empty() {
            continue;
        }
        let mut candidates = Vec::with_capacity(values.len());
        let mut outcomes = Vec::with_capacity(values.len());
        for &value in values {
            let mut config = current.clone();
            config.loss = with_param(&current.loss, param, value)?;
            let key = serde_json::to_string(&config).expect("config serializes");
            let outcome = match cache.get(&key) {
                Some(o) => *o,
                None => {
                    let o = match train_fn(&config) {
                        Ok(o) => Some(o),
                        Err(CalrefError::Divergence { .. }) => None,
                        Err(e) => return Err(e),
                    };
                    cache.insert(key, o);
                    o
                }
            };
            any_ok |= outcome.is_some();
            rows.push(SweepRow {
                stage,
                param,
                value,
                val_accuracy: outcome.map(|o| o.val_accuracy),
                val_ece: outcome.map(|o| o.val_ece),
                diverged: outcome.is_none(),
                selected: false,
            });
            candidates.push(config);
            outcomes.push(outcome);
        }
        if let Some(pick) = select_within_accuracy_band(&outcomes) {
            let first = rows.len() - values.len();
            rows[first + pick].selected = true;
            current = candidates.swap_remove(pick);
        }
    }
    if !rows.is_empty() && !any_ok {
        return Err(CalrefError::Sweep("every configuration diverged".into()));
    }
    Ok(SweepResult {
        selected: current,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::PrimaryLoss;

    fn baseline() -> TrainConfig {
        TrainConfig::new(
            LossSpec {
                primary: PrimaryLoss::Nll,
                secondary: SecondaryLoss::SAvuc {
                    kappa: 0.5,
                    temperature: 1.0,
                },
                beta: 1.0,
                lambda: 0.0,
            },
            1,
            0,
        )
    }

    fn out(val_accuracy: f64, val_ece: f64) -> Option<SweepOutcome> {
        Some(SweepOutcome { val_accuracy, val_ece })
    }

    #[test]
    fn band_rule() {
        // A is 2% more accurate with worse ECE; B is outside the band
        assert_eq!(
            select_within_accuracy_band(&[out(0.90, 0.08), out(0.882, 0.01)]),
            Some(0)
        );
        // inside the band the lower ECE wins
        assert_eq!(
            select_within_accuracy_band(&[out(0.90, 0.08), out(0.895, 0.01)]),
            Some(1)
        );
        assert_eq!(select_within_accuracy_band(&[None, out(0.5, 0.2), None]), Some(1));
        assert_eq!(select_within_accuracy_band(&[None, None]), None);
        assert_eq!(select_within_accuracy_band(&[out(0.9, 0.05), out(0.9, 0.05)]), Some(0));
    }

    #[test]
    fn single_point_grids_return_baseline() {
        let base = baseline();
        let grid = SweepGrid {
            kappa: vec![0.5],
            temperature: vec![1.0],
            beta: vec![1.0],
            lambda: vec![0.0],
        };
        let mut calls = 0;
        let result = sweep_one_at_a_time(&base, &grid, |_| {
            calls += 1;
            Ok(SweepOutcome {
                val_accuracy: 0.8,
                val_ece: 0.1,
            })
        })
        .unwrap();
        assert_eq!(result.selected, base);
        assert_eq!(result.rows.len(), 4);
        assert_eq!(calls, 1);
    }

    #[test]
    fn stages_chain_their_winners() {
        let base = baseline();
        let grid = SweepGrid {
            kappa: vec![0.2, 0.6],
            temperature: vec![],
            beta: vec![0.0, 3.0],
            lambda: vec![],
        };
        let result = sweep_one_at_a_time(&base, &grid, |c| {
            let SecondaryLoss::SAvuc { kappa, .. } = c.loss.secondary else {
                unreachable!()
            };
            // kappa 0.6 is better calibrated; beta 3 only helps with kappa 0.6
            let ece =
                if kappa == 0.6 { 0.05 } else { 0.1 } - if c.loss.beta == 3.0 && kappa == 0.6 { 0.02 } else { 0.0 };
            Ok(SweepOutcome {
                val_accuracy: 0.8,
                val_ece: ece,
            })
        })
        .unwrap();
        assert_eq!(
            result.selected.loss.secondary,
            SecondaryLoss::SAvuc {
                kappa: 0.6,
                temperature: 1.0
            }
        );
        assert_eq!(result.selected.loss.beta, 3.0);
        assert_eq!(result.rows.iter().filter(|r| r.selected).count(), 2);
    }

    #[test]
    fn divergence_handling() {
        let base = baseline();
        let grid = SweepGrid {
            beta: vec![1.0, 100.0],
            ..SweepGrid::default()
        };
        let result = sweep_one_at_a_time(&base, &grid, |c| {
            if c.loss.beta > 10.0 {
                Err(CalrefError::Divergence {
                    epoch: 0,
                    batch: 0,
                    loss: f64::NAN,
                })
            } else {
                Ok(SweepOutcome {
                    val_accuracy: 0.7,
                    val_ece: 0.3,
                })
            }
        })
        .unwrap();
        assert!(result.rows[1].diverged);
        assert_eq!(result.selected.loss.beta, 1.0);
        let all_bad = sweep_one_at_a_time(&base, &grid, |_| {
            Err(CalrefError::Divergence {
                epoch: 0,
                batch: 0,
                loss: f64::INFINITY,
            })
        });
        assert!(matches!(all_bad, Err(CalrefError::Sweep(_))));
    }

    #[test]
    fn inapplicable_parameter_rejected() {
        let mut base = baseline();
        base.loss.secondary = SecondaryLoss::None;
        let grid = SweepGrid {
            kappa: vec![0.3],
            ..SweepGrid::default()
        };
        let r = sweep_one_at_a_time(&base, &grid, |_| unreachable!());
        assert!(matches!(r, Err(CalrefError::Config(_))));
    }
}
