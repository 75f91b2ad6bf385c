//! Seeded synthetic classification tasks.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CalrefError, Result};

/// Feature count of the label-noise task. Only the first coordinate carries
/// signal; the rest give the network room to memorize flipped labels.
pub const LABEL_NOISE_DIM: usize = 10;
const LABEL_NOISE_OFFSET: f64 = 3.0;
const BLOB_RADIUS: f64 = 6.0;
const MOON_NOISE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskKind {
    /// Three unit-variance blobs in the plane, centers 6 apart from the origin.
    GaussianBlobs,
    /// Two interleaved half circles with Gaussian noise.
    NoisyMoons,
    /// Two blobs at +-3 on the first axis whose labels are flipped with probability `flip`.
    LabelNoiseBlobs { flip: f64 },
}

impl TaskKind {
    pub fn num_classes(&self) -> usize {
        match self {
            TaskKind::GaussianBlobs => 3,
            TaskKind::NoisyMoons | TaskKind::LabelNoiseBlobs { .. } => 2,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TaskKind::GaussianBlobs | TaskKind::NoisyMoons => 2,
            TaskKind::LabelNoiseBlobs { .. } => LABEL_NOISE_DIM,
        }
    }
}

/// Features with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() == 0 || features.nrows() != labels.len() {
            return Err(CalrefError::Ingest(format!(
                "{} feature rows for {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes < 2 || labels.iter().any(|&y| y >= num_classes) {
            return Err(CalrefError::Ingest(format!("labels must lie in [0, {num_classes})")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(CalrefError::Ingest("non-finite feature".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.ncols()
    }

    fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            features: self.features.slice(s![from..to, ..]).to_owned(),
            labels: self.labels[from..to].to_vec(),
            num_classes: self.num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws `n` examples with balanced classes and splits them 60/20/20 into
/// train, validation and test.
pub fn make_synthetic_task(kind: TaskKind, n: usize, seed: u64) -> Result<SyntheticTask> {
    if n < 100 {
        return Err(CalrefError::Config(format!("need at least 100 examples, got {n}")));
    }
    if let TaskKind::LabelNoiseBlobs { flip } = kind {
        if !(0.0..0.5).contains(&flip) {
            return Err(CalrefError::Config(format!(
                "flip rate must be in [0, 0.5), got {flip}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = kind.num_classes();
    let mut features = Array2::zeros((n, kind.input_dim()));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let class = i % k;
        let label = match kind {
            TaskKind::GaussianBlobs => {
                let angle = 2.0 * PI * class as f64 / k as f64;
                row[0] = BLOB_RADIUS * angle.cos() + gauss(&mut rng);
                row[1] = BLOB_RADIUS * angle.sin() + gauss(&mut rng);
                class
            }
            TaskKind::NoisyMoons => {
                let theta = PI * rng.random::<f64>();
                let (x, y) = if class == 0 {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                row[0] = x + MOON_NOISE * gauss(&mut rng);
                row[1] = y + MOON_NOISE * gauss(&mut rng);
                class
            }
            TaskKind::LabelNoiseBlobs { flip } => {
                let sign = if class == 0 { -1.0 } else { 1.0 };
                for v in row.iter_mut() {
                    *v = gauss(&mut rng);
                }
                row[0] += sign * LABEL_NOISE_OFFSET;
                if rng.random::<f64>() < flip {
                    1 - class
                } else {
                    class
                }
            }
        };
        labels.push(label);
    }
    let all = Dataset::new(features, labels, k)?;
    let n_train = n * 3 / 5;
    let n_val = n / 5;
    Ok(SyntheticTask {
        kind,
        train: all.slice(0, n_train),
        val: all.slice(n_train, n_train + n_val),
        test: all.slice(n_train + n_val, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn threshold_accuracy(data: &Dataset, rule: impl Fn(&[f64]) -> usize) -> f64 {
        let hits = data
            .features()
            .rows()
            .into_iter()
            .zip(data.labels())
            .filter(|(row, &y)| rule(row.as_slice().unwrap()) == y)
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn seeded_and_split() {
        let kind = TaskKind::NoisyMoons;
        let a = make_synthetic_task(kind, 1000, 3).unwrap();
        assert_eq!(a, make_synthetic_task(kind, 1000, 3).unwrap());
        assert_ne!(a.train, make_synthetic_task(kind, 1000, 4).unwrap().train);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (600, 200, 200));
        assert!(make_synthetic_task(kind, 99, 0).is_err());
    }

    #[test]
    fn blobs_are_separable() {
        let t = make_synthetic_task(TaskKind::GaussianBlobs, 3000, 1).unwrap();
        let nearest = |x: &[f64]| {
            (0..3)
                .map(|c| {
                    let a = 2.0 * PI * c as f64 / 3.0;
                    (x[0] - BLOB_RADIUS * a.cos()).powi(2) + (x[1] - BLOB_RADIUS * a.sin()).powi(2)
                })
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        };
        assert!(threshold_accuracy(&t.train, nearest) > 0.999);
    }

    #[test]
    fn label_noise_bayes_rate() {
        // Bayes rule is the sign of the first coordinate; its accuracy is
        // (1 - flip)(1 - e) + flip e with e = Phi(-3) the class overlap.
        let flip = 0.2;
        let t = make_synthetic_task(TaskKind::LabelNoiseBlobs { flip }, 20_000, 2).unwrap();
        let e = 0.001_349_898_031_630_1;
        let bayes = (1.0 - flip) * (1.0 - e) + flip * e;
        let acc = threshold_accuracy(&t.train, |x| usize::from(x[0] > 0.0));
        assert!((acc - bayes).abs() < 0.015, "{acc} vs {bayes}");
    }

    #[test]
    fn classes_balanced() {
        let t = make_synthetic_task(TaskKind::GaussianBlobs, 300, 0).unwrap();
        let counts = (0..3).map(|c| t.train.labels().iter().filter(|&&y| y == c).count());
        assert!(counts.into_iter().all(|c| c == 60));
    }
}
