//! Hard confidence binning (equal-width and equal-mass) and the soft,
//! differentiable bin-membership function.

use serde::{Deserialize, Serialize};

use crate::error::{CalrefError, Result};
use crate::numeric::softmax_into;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinningScheme {
    EqualWidth,
    EqualMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningSpec {
    pub scheme: BinningScheme,
    pub bins: usize,
}

impl BinningSpec {
    pub fn new(scheme: BinningScheme, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(CalrefError::domain("bin count must be at least 1"));
        }
        Ok(Self { scheme, bins })
    }

    pub fn equal_width(bins: usize) -> Result<Self> {
        Self::new(BinningScheme::EqualWidth, bins)
    }

    pub fn equal_mass(bins: usize) -> Result<Self> {
        Self::new(BinningScheme::EqualMass, bins)
    }
}

/// Result of assigning every confidence to exactly one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HardAssignment {
    pub bin_index: Vec<usize>,
    /// `M + 1` non-decreasing edges, first 0 and last 1.
    pub boundaries: Vec<f64>,
    /// Set when at least one bin received no example (equal-mass with N < M,
    /// or any equal-width bin nobody fell into).
    pub has_empty_bins: bool,
}

fn check_confidences(conf: &[f64]) -> Result<()> {
    match conf.iter().position(|c| !(0.0..=1.0).contains(c)) {
        Some(i) => Err(CalrefError::domain(format!(
            "confidence {} at index {i} outside [0, 1]",
            conf[i]
        ))),
        None => Ok(()),
    }
}

/// Equal-width bins are `[j/M, (j+1)/M)` with the last bin closed at 1.
/// Equal-mass bins split the stably sorted confidences at `ceil(jN/M)`.
pub fn assign_hard(conf: &[f64], spec: &BinningSpec) -> Result<HardAssignment> {
    check_confidences(conf)?;
    let m = spec.bins;
    if m == 0 {
        return Err(CalrefError::domain("bin count must be at least 1"));
    }
    let n = conf.len();
    let (bin_index, boundaries) = match spec.scheme {
        BinningScheme::EqualWidth => {
            let idx = conf.iter().map(|&c| equal_width_bin(c, m)).collect();
            let edges = (0..=m).map(|j| j as f64 / m as f64).collect();
            (idx, edges)
        }
        BinningScheme::EqualMass => {
            let mut order: Vec<usize> = (0..n).collect();
            // stable sort by (confidence, original index)
            order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(a.cmp(&b)));
            let split = |j: usize| (j * n).div_ceil(m);
            let mut idx = vec![0usize; n];
            for j in 0..m {
                for &i in &order[split(j)..split(j + 1)] {
                    idx[i] = j;
                }
            }
            let mut edges = Vec::with_capacity(m + 1);
            edges.push(0.0);
            for j in 1..m {
                let k = split(j);
                let edge = if k == 0 {
                    0.0
                } else if k >= n {
                    1.0
                } else {
                    0.5 * (conf[order[k - 1]] + conf[order[k]])
                };
                edges.push(edge);
            }
            edges.push(1.0);
            (idx, edges)
        }
    };
    let mut seen = vec![false; m];
    for &b in &bin_index {
        seen[b] = true;
    }
    Ok(HardAssignment {
        bin_index,
        boundaries,
        has_empty_bins: seen.iter().any(|s| !s),
    })
}

pub(crate) fn equal_width_bin(c: f64, m: usize) -> usize {
    ((c * m as f64).floor() as usize).min(m - 1)
}

/// Soft equal-width binning with `M` centers at `(j + 0.5) / M` and a
/// temperature controlling how sharply membership decays with distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftBinningSpec {
    pub bins: usize,
    pub temperature: f64,
}

impl SoftBinningSpec {
    pub fn new(bins: usize, temperature: f64) -> Result<Self> {
        let spec = Self { bins, temperature };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(CalrefError::domain("bin count must be at least 1"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(CalrefError::domain(format!(
                "binning temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.bins as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|j| self.center(j)).collect()
    }

    /// Membership `u*(c)` and its derivative `du*/dc`, written into caller
    /// buffers of length `M`. No validation; callers check the spec once.
    pub(crate) fn membership_with_grad(&self, c: f64, u: &mut [f64], du: &mut [f64]) {
        let t = self.temperature;
        // logits g_j and their slopes dg_j/dc
        for j in 0..self.bins {
            let d = c - self.center(j);
            du[j] = -2.0 * d / t;
            u[j] = -d * d / t;
        }
        let g = u.to_vec();
        softmax_into(&g, u);
        let mean_slope: f64 = u.iter().zip(du.iter()).map(|(a, b)| a * b).sum();
        for (d, &uj) in du.iter_mut().zip(u.iter()) {
            *d = uj * (*d - mean_slope);
        }
    }

    pub(crate) fn membership_into(&self, c: f64, u: &mut [f64]) {
        let t = self.temperature;
        let mut g = vec![0.0; self.bins];
        for (j, gj) in g.iter_mut().enumerate() {
            let d = c - self.center(j);
            *gj = -d * d / t;
        }
        softmax_into(&g, u);
    }
}

fn check_scalar_confidence(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(CalrefError::domain(format!("confidence {c} outside [0, 1]")))
    }
}

/// `u*(c) = softmax_j(-(c - xi_j)^2 / T)`.
pub fn soft_membership(c: f64, spec: &SoftBinningSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    check_scalar_confidence(c)?;
    let mut u = vec![0.0; spec.bins];
    spec.membership_into(c, &mut u);
    Ok(u)
}

/// Analytic `du*_j / dc`.
pub fn soft_membership_grad(c: f64, spec: &SoftBinningSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    check_scalar_confidence(c)?;
    let mut u = vec![0.0; spec.bins];
    let mut du = vec![0.0; spec.bins];
    spec.membership_with_grad(c, &mut u, &mut du);
    Ok(du)
}
