//! Primary training losses (NLL, focal, multiclass Brier) and the composite
//! objective `PL + beta * SL + lambda * L2`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::avuc::{avuc, avuc_grad, s_avuc, s_avuc_grad, AvucSpec, SoftAvucSpec};
use crate::binning::SoftBinningSpec;
use crate::data::{summarize, EvalSet, PredictionSummary};
use crate::error::{CalrefError, Result};
use crate::metrics::{sb_ece_conf_grad, EceMode};
use crate::numeric::compensated_sum;

pub const DEFAULT_FOCAL_GAMMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PrimaryLoss {
    Nll,
    Focal {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Mse,
}

fn default_gamma() -> f64 {
    DEFAULT_FOCAL_GAMMA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SecondaryLoss {
    None,
    SbEce {
        bins: usize,
        temperature: f64,
        p: f64,
        mode: EceMode,
    },
    SAvuc {
        kappa: f64,
        temperature: f64,
    },
    Avuc {
        kappa: f64,
    },
    AvucGs {
        kappa: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub primary: PrimaryLoss,
    pub secondary: SecondaryLoss,
    pub beta: f64,
    pub lambda: f64,
}

impl LossSpec {
    pub fn primary_only(primary: PrimaryLoss) -> Self {
        Self {
            primary,
            secondary: SecondaryLoss::None,
            beta: 0.0,
            lambda: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PrimaryLoss::Focal { gamma } = self.primary {
            if !(gamma >= 0.0) || !gamma.is_finite() {
                return Err(CalrefError::domain(format!("focal gamma must be >= 0, got {gamma}")));
            }
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(CalrefError::domain(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CalrefError::domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        match self.secondary {
            SecondaryLoss::None => {}
            SecondaryLoss::SbEce {
                bins, temperature, p, ..
            } => {
                SoftBinningSpec::new(bins, temperature)?;
                if !(p >= 1.0) {
                    return Err(CalrefError::domain(format!("p must be >= 1, got {p}")));
                }
            }
            SecondaryLoss::SAvuc { kappa, temperature } => {
                SoftAvucSpec { kappa, temperature }.validate()?;
            }
            SecondaryLoss::Avuc { kappa } | SecondaryLoss::AvucGs { kappa } => {
                if !(kappa > 0.0) {
                    return Err(CalrefError::domain(format!("AvUC kappa must be > 0, got {kappa}")));
                }
            }
        }
        Ok(())
    }

    /// A secondary loss that can never contribute (or a weight with nothing
    /// to weigh). Legal, but usually a configuration slip.
    pub fn has_inert_secondary(&self) -> bool {
        (self.beta == 0.0) != matches!(self.secondary, SecondaryLoss::None)
    }
}

/// A scalar loss and its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossComponents {
    pub primary: f64,
    pub secondary: f64,
    pub l2: f64,
}

#[derive(Debug, Clone)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad_logits: Array2<f64>,
    pub components: LossComponents,
}

/// Mean negative log-likelihood; gradient `(P - Y) / N`.
pub fn nll(summary: &PredictionSummary) -> LossGrad {
    let n = summary.len() as f64;
    let value = compensated_sum(
        summary
            .labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -summary.probs[[i, y]].ln()),
    ) / n;
    let mut grad = summary.probs.clone();
    for (i, &y) in summary.labels.iter().enumerate() {
        grad[[i, y]] -= 1.0;
    }
    grad.mapv_inplace(|g| g / (n * summary.temperature));
    LossGrad { value, grad }
}

/// Mean of `-(1 - p_y)^gamma ln p_y`. `gamma = 0` is exactly [`nll`].
pub fn focal(summary: &PredictionSummary, gamma: f64) -> LossGrad {
    if gamma == 0.0 {
        return nll(summary);
    }
    let n = summary.len() as f64;
    let mut terms = Vec::with_capacity(summary.len());
    let mut d_probs = Array2::<f64>::zeros(summary.probs.dim());
    for (i, &y) in summary.labels.iter().enumerate() {
        let p = summary.probs[[i, y]];
        let q = 1.0 - p;
        let lp = p.ln();
        terms.push(-q.powf(gamma) * lp);
        // d/dp of -(1-p)^g ln p
        let mut d = -q.powf(gamma) / p;
        if q > 0.0 {
            d += gamma * q.powf(gamma - 1.0) * lp;
        }
        d_probs[[i, y]] = d / n;
    }
    LossGrad {
        value: compensated_sum(terms) / n,
        grad: summary.logit_grad_from_probs(&d_probs),
    }
}

/// Multiclass Brier score: mean over examples of `sum_k (p_k - y_k)^2`.
pub fn mse(summary: &PredictionSummary) -> LossGrad {
    let n = summary.len() as f64;
    let mut diff = summary.probs.clone();
    for (i, &y) in summary.labels.iter().enumerate() {
        diff[[i, y]] -= 1.0;
    }
    let value = compensated_sum(diff.axis_iter(Axis(0)).map(|r| r.iter().map(|d| d * d).sum::<f64>())) / n;
    let d_probs = diff.mapv(|d| 2.0 * d / n);
    LossGrad {
        value,
        grad: summary.logit_grad_from_probs(&d_probs),
    }
}

pub fn primary_loss(summary: &PredictionSummary, primary: &PrimaryLoss) -> LossGrad {
    match *primary {
        PrimaryLoss::Nll => nll(summary),
        PrimaryLoss::Focal { gamma } => focal(summary, gamma),
        PrimaryLoss::Mse => mse(summary),
    }
}

/// Value and logit gradient of a secondary loss on one batch.
pub fn secondary_loss(summary: &PredictionSummary, secondary: &SecondaryLoss) -> Result<LossGrad> {
    let zeros = || Array2::zeros(summary.probs.dim());
    match *secondary {
        SecondaryLoss::None => Ok(LossGrad {
            value: 0.0,
            grad: zeros(),
        }),
        SecondaryLoss::SbEce {
            bins,
            temperature,
            p,
            mode,
        } => {
            let spec = SoftBinningSpec::new(bins, temperature)?;
            let g = sb_ece_conf_grad(&summary.confidence, &summary.correct, &spec, p, mode)?;
            Ok(LossGrad {
                value: g.value,
                grad: summary.logit_grad(&g.d_conf, None),
            })
        }
        SecondaryLoss::SAvuc { kappa, temperature } => {
            let spec = SoftAvucSpec { kappa, temperature };
            Ok(LossGrad {
                value: s_avuc(summary, &spec)?.value,
                grad: s_avuc_grad(summary, &spec)?,
            })
        }
        SecondaryLoss::Avuc { kappa } | SecondaryLoss::AvucGs { kappa } => {
            let spec = AvucSpec {
                kappa,
                gradient_stopping: matches!(secondary, SecondaryLoss::AvucGs { .. }),
            };
            Ok(LossGrad {
                value: avuc(summary, &spec)?.value,
                grad: avuc_grad(summary, &spec)?,
            })
        }
    }
}

/// `PL + beta * SL + lambda * L2` on a batch of logits.
///
/// `l2_sq_norm` is the squared norm of the model weights; its gradient acts on
/// the weights and is applied by the trainer, so `grad_logits` holds only
/// `grad(PL) + beta * grad(SL)`. With `beta = 0` the secondary loss is not
/// evaluated at all.
pub fn composite_loss(
    logits: &Array2<f64>,
    labels: &[usize],
    spec: &LossSpec,
    l2_sq_norm: f64,
) -> Result<LossValueGrad> {
    spec.validate()?;
    let set = EvalSet::new(logits.clone(), labels.to_vec())?;
    let summary = summarize(&set, 1.0)?;
    composite_loss_on_summary(&summary, spec, l2_sq_norm)
}

pub fn composite_loss_on_summary(
    summary: &PredictionSummary,
    spec: &LossSpec,
    l2_sq_norm: f64,
) -> Result<LossValueGrad> {
    let primary = primary_loss(summary, &spec.primary);
    let mut grad = primary.grad;
    let mut secondary_value = 0.0;
    if spec.beta != 0.0 && !matches!(spec.secondary, SecondaryLoss::None) {
        let sec = secondary_loss(summary, &spec.secondary)?;
        secondary_value = sec.value;
        grad.scaled_add(spec.beta, &sec.grad);
    }
    let components = LossComponents {
        primary: primary.value,
        secondary: secondary_value,
        l2: l2_sq_norm,
    };
    Ok(LossValueGrad {
        value: components.primary + spec.beta * components.secondary + spec.lambda * components.l2,
        grad_logits: grad,
        components,
    })
}
