//! Fully connected network with rectifier hidden layers.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{CalrefError, Result};

const MAGIC: &[u8; 8] = b"CALREFM1";

/// One affine layer, `x W + b`, with `W` stored input-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Dense {
            weights: Array2::zeros(self.weights.dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

impl MlpModel {
    /// Architecture `dims = [input, hidden.., classes]`, weights and biases
    /// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(CalrefError::Config(format!("invalid architecture {dims:?}")));
        }
        if dims[dims.len() - 1] < 2 {
            return Err(CalrefError::Config("output layer needs at least 2 classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || dist.sample(&mut rng)),
                    bias: Array1::from_shape_simple_fn(w[1], || dist.sample(&mut rng)),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CalrefError::Config("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.ncols() != l.bias.len() {
                return Err(CalrefError::Config(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && layers[i - 1].weights.ncols() != l.weights.nrows() {
                return Err(CalrefError::Config(format!("layer {i}: input width mismatch")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(CalrefError::Config(format!("layer {i}: non-finite parameter")));
            }
        }
        if layers[layers.len() - 1].weights.ncols() < 2 {
            return Err(CalrefError::Config("output layer needs at least 2 classes".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.nrows()];
        dims.extend(self.layers.iter().map(|l| l.weights.ncols()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Squared norm of the weights; biases are not regularized.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(CalrefError::Config(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Activations of every layer: entry 0 is the input, the last entry the
    /// logits.
    pub(crate) fn activations(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(&x)?;
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weights) + &l.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.activations(x)?.pop().expect("at least one layer"))
    }

    /// Backpropagates `d_logits` through the network. `acts` must come from
    /// [`MlpModel::activations`] on the same input.
    pub(crate) fn backward(&self, acts: &[Array2<f64>], d_logits: Array2<f64>) -> Vec<Dense> {
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut delta = d_logits;
        for i in (0..self.layers.len()).rev() {
            grads[i].weights = acts[i].t().dot(&delta);
            grads[i].bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                back.zip_mut_with(&acts[i], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads
    }

    pub(crate) fn zero_grads(&self) -> Vec<Dense> {
        self.layers.iter().map(Dense::zeros_like).collect()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Parameters flattened layer by layer, weights (row-major) before bias.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(CalrefError::Config(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// `CALREFM1`, layer count and widths as little-endian `u64`, then every
    /// parameter as little-endian `f64` in [`MlpModel::params`] order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.dims();
        let mut out = Vec::with_capacity(16 + 8 * (dims.len() + self.num_params()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(dims.len() as u64).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| CalrefError::Ingest(format!("model file: {m}"));
        let mut words = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| bad("bad magic"))?
            .chunks(8);
        let mut next = || -> Result<[u8; 8]> {
            let chunk = words.next().ok_or_else(|| bad("truncated"))?;
            chunk.try_into().map_err(|_| bad("truncated"))
        };
        let n_dims = u64::from_le_bytes(next()?) as usize;
        if !(2..=1024).contains(&n_dims) {
            return Err(bad("implausible layer count"));
        }
        let dims = (0..n_dims)
            .map(|_| next().map(|w| u64::from_le_bytes(w) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self::new(&dims, 0).map_err(|e| bad(&e.to_string()))?;
        let params = (0..model.num_params())
            .map(|_| next().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        if next().is_ok() {
            return Err(bad("trailing bytes"));
        }
        model.set_params(&params)?;
        if !model.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(model)
    }
}

pub(crate) fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}
