//! Mini-batch SGD with momentum under the composite loss, on a small
//! rectifier network.

pub mod model;
pub mod sweep;
pub mod task;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{summarize, EvalSet};
use crate::error::{CalrefError, Result};
use crate::losses::{composite_loss, nll, LossComponents, LossSpec};
use crate::metrics::evaluation_ece;

pub use model::{Dense, MlpModel};
pub use sweep::{select_within_accuracy_band, sweep_one_at_a_time, SweepGrid, SweepOutcome, SweepResult, SweepRow};
pub use task::{make_synthetic_task, Dataset, SyntheticTask, TaskKind};

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Stream of the shuffling generator; stream 0 initializes the weights.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiplies the rate by `factor` from each listed (0-based) epoch on.
    StepDecay { factor: f64, epochs: Vec<usize> },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { factor, epochs } => {
                base * factor.powi(epochs.iter().filter(|&&m| m <= epoch).count() as i32)
            }
        }
    }
}

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}
fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossSpec,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Hidden layer widths.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl TrainConfig {
    pub fn new(loss: LossSpec, epochs: usize, seed: u64) -> Self {
        Self {
            loss,
            learning_rate: DEFAULT_LEARNING_RATE,
            momentum: DEFAULT_MOMENTUM,
            epochs,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            schedule: LrSchedule::Constant,
            hidden: default_hidden(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CalrefError::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CalrefError::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CalrefError::Config("epochs and batch size must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(CalrefError::Config("hidden widths must be positive".into()));
        }
        if let LrSchedule::StepDecay { factor, .. } = self.schedule {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(CalrefError::Config(format!("decay factor must be > 0, got {factor}")));
            }
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(num_classes);
        dims
    }
}

/// Loss and parameter gradient on one batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub value: f64,
    pub components: LossComponents,
    /// Same layout as the model's layers.
    pub grads: Vec<Dense>,
}

impl BatchGradient {
    /// Gradient flattened in [`MlpModel::params`] order.
    pub fn flat(&self) -> Vec<f64> {
        model::flatten(&self.grads)
    }
}

/// Composite loss of the model on `(x, labels)` and its gradient with respect
/// to every parameter. The L2 term contributes `2 lambda W` to weights only.
pub fn forward_backward(
    model: &MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    spec: &LossSpec,
) -> Result<BatchGradient> {
    if x.nrows() == 0 || x.nrows() != labels.len() {
        return Err(CalrefError::Ingest(format!(
            "{} rows for {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let acts = model.activations(x)?;
    let logits = acts.last().expect("logits");
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(CalrefError::Divergence {
            epoch: 0,
            batch: 0,
            loss: f64::NAN,
        });
    }
    let out = composite_loss(logits, labels, spec, model.weight_sq_norm())?;
    let mut grads = model.backward(&acts, out.grad_logits);
    if spec.lambda != 0.0 {
        for (g, l) in grads.iter_mut().zip(model.layers()) {
            g.weights.scaled_add(2.0 * spec.lambda, &l.weights);
        }
    }
    Ok(BatchGradient {
        value: out.value,
        components: out.components,
        grads,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean composite loss over the batches that were not skipped.
    pub train_loss: Option<f64>,
    pub val_accuracy: f64,
    /// Evaluation-convention ECE as a fraction.
    pub val_ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedBatch {
    pub epoch: usize,
    pub batch: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub architecture: Vec<usize>,
    pub batches_per_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub skipped: Vec<SkippedBatch>,
    #[serde(skip)]
    pub model: MlpModel,
}

impl TrainReport {
    pub fn total_batches(&self) -> usize {
        self.batches_per_epoch * self.epochs.len()
    }

    pub fn skipped_fraction(&self) -> f64 {
        self.skipped.len() as f64 / self.total_batches() as f64
    }

    pub fn final_epoch(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch")
    }
}

/// Accuracy and calibration of a model on a labelled set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub accuracy: f64,
    /// Evaluation-convention ECE as a fraction.
    pub ece: f64,
    pub nll: f64,
    pub mean_confidence: f64,
}

/// Logits of `model` on `data`, paired with its labels.
pub fn predict(model: &MlpModel, data: &Dataset) -> Result<EvalSet> {
    let logits = model.forward(data.features().view())?;
    EvalSet::new(logits, data.labels().to_vec())
}

pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<EvalMetrics> {
    let summary = summarize(&predict(model, data)?, 1.0)?;
    Ok(EvalMetrics {
        n: summary.len(),
        accuracy: summary.accuracy(),
        ece: evaluation_ece(&summary),
        nll: nll(&summary).value,
        mean_confidence: summary.mean_confidence(),
    })
}

/// Trains a freshly initialized network. Degenerate AvUC batches are skipped
/// and recorded; a non-finite loss or parameter aborts with
/// [`CalrefError::Divergence`].
///
/// Each epoch reshuffles the training set and cuts it into full batches; the
/// remainder is dropped unless the set is smaller than one batch.
pub fn train(train_data: &Dataset, val_data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if train_data.input_dim() != val_data.input_dim() || train_data.num_classes() != val_data.num_classes() {
        return Err(CalrefError::Config("train and validation shapes differ".into()));
    }
    let architecture = config.architecture(train_data.input_dim(), train_data.num_classes());
    let mut model = MlpModel::new(&architecture, config.seed)?;
    let mut velocity = model.zero_grads();
    let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);
    shuffler.set_stream(SHUFFLE_STREAM);

    let n = train_data.len();
    let batch_size = config.batch_size.min(n);
    let batches_per_epoch = n / batch_size;
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut skipped = Vec::new();

    for epoch in 0..config.epochs {
        let lr = config.schedule.rate(config.learning_rate, epoch);
        order.shuffle(&mut shuffler);
        let mut loss_sum = 0.0;
        let mut used = 0usize;
        for (batch, idx) in order.chunks_exact(batch_size).enumerate() {
            let x = train_data.features().select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| train_data.labels()[i]).collect();
            let step = match forward_backward(&model, x.view(), &y, &config.loss) {
                Ok(step) => step,
                Err(CalrefError::DegenerateBatch(reason)) => {
                    skipped.push(SkippedBatch { epoch, batch, reason });
                    continue;
                }
                Err(CalrefError::Divergence { loss, .. }) => {
                    return Err(CalrefError::Divergence { epoch, batch, loss });
                }
                Err(e) => return Err(e),
            };
            if !step.value.is_finite() {
                return Err(CalrefError::Divergence {
                    epoch,
                    batch,
                    loss: step.value,
                });
            }
            for ((v, g), p) in velocity.iter_mut().zip(&step.grads).zip(model.layers_mut()) {
                v.weights
                    .zip_mut_with(&g.weights, |v, &g| *v = config.momentum * *v - lr * g);
                v.bias.zip_mut_with(&g.bias, |v, &g| *v = config.momentum * *v - lr * g);
                p.weights += &v.weights;
                p.bias += &v.bias;
            }
            if !model.is_finite() {
                return Err(CalrefError::Divergence {
                    epoch,
                    batch,
                    loss: step.value,
                });
            }
            loss_sum += step.value;
            used += 1;
        }
        let val = evaluate(&model, val_data).map_err(|_| CalrefError::Divergence {
            epoch,
            batch: batches_per_epoch,
            loss: f64::NAN,
        })?;
        epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: (used > 0).then(|| loss_sum / used as f64),
            val_accuracy: val.accuracy,
            val_ece: val.ece,
        });
    }

    Ok(TrainReport {
        config: config.clone(),
        architecture,
        batches_per_epoch,
        epochs,
        skipped,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check_vec;
    use crate::losses::{PrimaryLoss, SecondaryLoss};
    use crate::metrics::EceMode;
    use ndarray::{array, Array2};
    use rand::Rng;

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
    }

    fn loss_at(model: &MlpModel, params: &[f64], x: &Array2<f64>, y: &[usize], spec: &LossSpec) -> f64 {
        let mut m = model.clone();
        m.set_params(params).unwrap();
        forward_backward(&m, x.view(), y, spec).unwrap().value
    }

    #[test]
    fn softmax_regression_closed_form() {
        let model = MlpModel::new(&[3, 4], 2).unwrap();
        let x = random_input(7, 3, 1);
        let y = [0, 3, 1, 2, 2, 0, 1];
        let step = forward_backward(&model, x.view(), &y, &LossSpec::primary_only(PrimaryLoss::Nll)).unwrap();
        let logits = model.forward(x.view()).unwrap();
        let s = summarize(&EvalSet::new(logits, y.to_vec()).unwrap(), 1.0).unwrap();
        let mut residual = s.probs.clone();
        for (i, &yi) in y.iter().enumerate() {
            residual[[i, yi]] -= 1.0;
        }
        let w = x.t().dot(&residual) / 7.0;
        let b = residual.sum_axis(Axis(0)) / 7.0;
        for (a, e) in step.grads[0].weights.iter().zip(w.iter()) {
            assert!((a - e).abs() < 1e-14);
        }
        for (a, e) in step.grads[0].bias.iter().zip(b.iter()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn l2_only_gradient() {
        // zero weights into the output layer give constant logits, so the
        // primary gradient vanishes on the first layer and only 2 lambda W remains
        let mut model = MlpModel::new(&[2, 3, 2], 5).unwrap();
        model.layers_mut()[1].weights.fill(0.0);
        model.layers_mut()[1].bias.fill(0.0);
        let spec = LossSpec {
            lambda: 0.3,
            ..LossSpec::primary_only(PrimaryLoss::Nll)
        };
        let x = random_input(4, 2, 3);
        let step = forward_backward(&model, x.view(), &[0, 1, 1, 0], &spec).unwrap();
        let expected = &model.layers()[0].weights * 0.6;
        for (a, e) in step.grads[0].weights.iter().zip(expected.iter()) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!(step.grads[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn composite_parameter_gradient_on_tiny_net() {
        let secondaries = [
            SecondaryLoss::SAvuc {
                kappa: 0.4,
                temperature: 1.0,
            },
            SecondaryLoss::SbEce {
                bins: 5,
                temperature: 0.05,
                p: 2.0,
                mode: EceMode::LabelBinned,
            },
        ];
        for (k, secondary) in secondaries.into_iter().enumerate() {
            let model = MlpModel::new(&[2, 4, 3], 11 + k as u64).unwrap();
            let x = random_input(12, 2, 20 + k as u64);
            let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
            let spec = LossSpec {
                primary: PrimaryLoss::Focal { gamma: 2.0 },
                secondary,
                beta: 0.7,
                lambda: 0.01,
            };
            let step = forward_backward(&model, x.view(), &y, &spec).unwrap();
            let err = finite_diff_check_vec(
                |p| loss_at(&model, p, &x, &y, &spec),
                &model.params(),
                &step.flat(),
                1e-6,
            );
            assert!(err <= 1e-3, "{secondary:?}: {err}");
        }
    }

    #[test]
    fn two_momentum_steps_by_hand() {
        // softmax regression on the single input x = 1: logits = w + b, and the
        // gradient of every parameter for class j is p_j - [j == y]
        let (lr, mu, seed) = (0.1, 0.9, 5);
        let data = Dataset::new(array![[1.0]], vec![0], 2).unwrap();
        let mut config = TrainConfig::new(LossSpec::primary_only(PrimaryLoss::Nll), 2, seed);
        config.hidden.clear();
        let report = train(&data, &data, &config).unwrap();

        let grad = |theta: &[f64]| -> Vec<f64> {
            let (z0, z1) = (theta[0] + theta[2], theta[1] + theta[3]);
            let p0 = 1.0 / (1.0 + (z1 - z0).exp());
            vec![p0 - 1.0, 1.0 - p0, p0 - 1.0, 1.0 - p0]
        };
        let theta0 = MlpModel::new(&[1, 2], seed).unwrap().params();
        let v1: Vec<f64> = grad(&theta0).iter().map(|g| -lr * g).collect();
        let theta1: Vec<f64> = theta0.iter().zip(&v1).map(|(t, v)| t + v).collect();
        let v2: Vec<f64> = v1.iter().zip(grad(&theta1)).map(|(v, g)| mu * v - lr * g).collect();
        let theta2: Vec<f64> = theta1.iter().zip(&v2).map(|(t, v)| t + v).collect();
        for (a, e) in report.model.params().iter().zip(&theta2) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    fn blob_task() -> SyntheticTask {
        make_synthetic_task(TaskKind::LabelNoiseBlobs { flip: 0.0 }, 500, 9).unwrap()
    }

    #[test]
    fn separable_blobs_are_learned() {
        let t = blob_task();
        let mut config = TrainConfig::new(LossSpec::primary_only(PrimaryLoss::Nll), 50, 3);
        config.hidden = vec![16];
        let report = train(&t.train, &t.val, &config).unwrap();
        assert!(report.final_epoch().val_accuracy >= 0.99);
        assert_eq!(report.epochs.len(), 50);
    }

    #[test]
    fn same_seed_same_report() {
        let t = blob_task();
        let mut config = TrainConfig::new(
            LossSpec {
                primary: PrimaryLoss::Nll,
                secondary: SecondaryLoss::SAvuc {
                    kappa: 0.3,
                    temperature: 1.0,
                },
                beta: 1.0,
                lambda: 1e-4,
            },
            5,
            17,
        );
        config.hidden = vec![8];
        let a = train(&t.train, &t.val, &config).unwrap();
        let b = train(&t.train, &t.val, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn zero_beta_matches_no_secondary() {
        let t = blob_task();
        let base = LossSpec::primary_only(PrimaryLoss::Nll);
        let with = LossSpec {
            secondary: SecondaryLoss::Avuc { kappa: 0.3 },
            ..base
        };
        let mut config = TrainConfig::new(base, 4, 1);
        config.hidden = vec![8];
        let a = train(&t.train, &t.val, &config).unwrap();
        config.loss = with;
        let b = train(&t.train, &t.val, &config).unwrap();
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let t = make_synthetic_task(TaskKind::GaussianBlobs, 300, 0).unwrap();
        let mut config = TrainConfig::new(LossSpec::primary_only(PrimaryLoss::Mse), 20, 0);
        config.learning_rate = 1e200;
        assert!(matches!(
            train(&t.train, &t.val, &config),
            Err(CalrefError::Divergence { .. })
        ));
    }

    #[test]
    fn step_decay_schedule() {
        let s = LrSchedule::StepDecay {
            factor: 0.1,
            epochs: vec![2, 4],
        };
        let rates: Vec<f64> = (0..6).map(|e| s.rate(1.0, e)).collect();
        assert_eq!(rates[0], 1.0);
        assert_eq!(rates[1], 1.0);
        assert!((rates[2] - 0.1).abs() < 1e-15);
        assert!((rates[5] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c: TrainConfig = serde_json::from_str(
            r#"{"loss": {"primary": {"kind": "nll"}, "secondary": {"kind": "none"}, "beta": 0, "lambda": 0}, "epochs": 3}"#,
        )
        .unwrap();
        assert_eq!(c.learning_rate, 0.1);
        assert_eq!(c.momentum, 0.9);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.hidden, vec![64, 64]);
        assert!(serde_json::from_str::<TrainConfig>(
            r#"{"loss": {"primary": {"kind": "nll"}, "secondary": {"kind": "none"}, "beta": 0, "lambda": 0}, "epochs": 3, "lr": 1}"#
        )
        .is_err());
    }
}
