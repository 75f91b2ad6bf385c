//! Evaluation sets and the per-prediction quantities derived from logits.

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{CalrefError, Result};
use crate::numeric::{entropy, softmax_into};

/// `N x K` logits together with `N` integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    logits: Array2<f64>,
    labels: Vec<usize>,
}

impl EvalSet {
    pub fn new(logits: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (n, k) = logits.dim();
        if n == 0 {
            return Err(CalrefError::Ingest("evaluation set is empty".into()));
        }
        if k < 2 {
            return Err(CalrefError::Ingest(format!("need at least 2 classes, got {k}")));
        }
        if labels.len() != n {
            return Err(CalrefError::Ingest(format!(
                "{} labels for {n} logit rows",
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
            return Err(CalrefError::Ingest(format!("label {y} at row {i} outside 0..{k}")));
        }
        if let Some(((i, j), v)) = logits.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(CalrefError::Ingest(format!(
                "non-finite logit {v} at row {i}, column {j}"
            )));
        }
        Ok(Self { logits, labels })
    }

    /// Builds a set from row vectors; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(CalrefError::Ingest("ragged logit rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let logits = Array2::from_shape_vec((rows.len(), k), flat).map_err(|e| CalrefError::Ingest(e.to_string()))?;
        Self::new(logits, labels)
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.logits.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>) {
        (self.logits, self.labels)
    }
}

/// Softmax probabilities and everything derived from them, per example.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSummary {
    pub probs: Array2<f64>,
    pub confidence: Vec<f64>,
    pub predicted: Vec<usize>,
    pub correct: Vec<bool>,
    /// Entropy in nats.
    pub entropy: Vec<f64>,
    /// Entropy divided by `ln K`.
    pub norm_entropy: Vec<f64>,
    pub labels: Vec<usize>,
    /// Temperature the logits were divided by before the softmax.
    pub temperature: f64,
}

/// Index of the first maximal element.
pub fn argmax_stable(row: &[f64]) -> Result<usize> {
    if row.is_empty() {
        return Err(CalrefError::domain("argmax of an empty row"));
    }
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    Ok(best)
}

fn argmax_view(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise `softmax(logits / temperature)` plus confidence, prediction,
/// accuracy and entropy for every example.
pub fn summarize(set: &EvalSet, temperature: f64) -> Result<PredictionSummary> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(CalrefError::domain(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let (n, k) = set.logits.dim();
    let mut probs = Array2::<f64>::zeros((n, k));
    let mut scaled = vec![0.0; k];
    let mut out = vec![0.0; k];
    for (i, row) in set.logits.axis_iter(Axis(0)).enumerate() {
        for (s, &z) in scaled.iter_mut().zip(row) {
            *s = z / temperature;
        }
        softmax_into(&scaled, &mut out);
        probs.row_mut(i).iter_mut().zip(&out).for_each(|(d, &s)| *d = s);
    }
    Ok(summary_from_probs(probs, set.labels.clone(), temperature))
}

pub(crate) fn summary_from_probs(probs: Array2<f64>, labels: Vec<usize>, temperature: f64) -> PredictionSummary {
    let n = probs.nrows();
    let ln_k = (probs.ncols() as f64).ln();
    let mut confidence = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    let mut correct = Vec::with_capacity(n);
    let mut ent = Vec::with_capacity(n);
    let mut norm = Vec::with_capacity(n);
    for (row, &y) in probs.axis_iter(Axis(0)).zip(&labels) {
        let q = argmax_view(row);
        let h = entropy(row.as_slice().expect("standard layout"));
        confidence.push(row[q]);
        predicted.push(q);
        correct.push(q == y);
        ent.push(h);
        norm.push((h / ln_k).clamp(0.0, 1.0));
    }
    PredictionSummary {
        probs,
        confidence,
        predicted,
        correct,
        entropy: ent,
        norm_entropy: norm,
        labels,
        temperature,
    }
}

impl PredictionSummary {
    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn accuracy(&self) -> f64 {
        crate::numeric::mean(self.correct.iter().map(|&a| f64::from(u8::from(a))))
    }

    pub fn mean_confidence(&self) -> f64 {
        crate::numeric::mean(self.confidence.iter().copied())
    }

    pub fn mean_entropy(&self) -> f64 {
        crate::numeric::mean(self.entropy.iter().copied())
    }

    /// Chains per-example sensitivities `dL/dc_i` and `dL/dh_i` through the
    /// softmax to a gradient with respect to the (unscaled) logits.
    ///
    /// `dc_i/dz_j = p_j (1[j = q_i] - c_i)` and `dh_i/dz_j = -p_j (ln p_j + h_i)`,
    /// each divided by the temperature.
    pub fn logit_grad(&self, d_conf: &[f64], d_entropy: Option<&[f64]>) -> Array2<f64> {
        let mut grad = Array2::<f64>::zeros(self.probs.dim());
        let inv_t = 1.0 / self.temperature;
        for (i, (row, mut out)) in self
            .probs
            .axis_iter(Axis(0))
            .zip(grad.axis_iter_mut(Axis(0)))
            .enumerate()
        {
            let q = self.predicted[i];
            let c = self.confidence[i];
            let dc = d_conf[i];
            let dh = d_entropy.map_or(0.0, |d| d[i]);
            let h = self.entropy[i];
            for (j, (&p, o)) in row.iter().zip(out.iter_mut()).enumerate() {
                let mut g = 0.0;
                if dc != 0.0 {
                    let ind = if j == q { 1.0 } else { 0.0 };
                    g += dc * p * (ind - c);
                }
                if dh != 0.0 && p > 0.0 {
                    g -= dh * p * (p.ln() + h);
                }
                *o = g * inv_t;
            }
        }
        grad
    }

    /// Chains a full `dL/dp` matrix through the softmax Jacobian:
    /// `dL/dz_j = p_j (g_j - sum_k g_k p_k) / T`.
    pub fn logit_grad_from_probs(&self, d_probs: &Array2<f64>) -> Array2<f64> {
        let mut grad = Array2::<f64>::zeros(self.probs.dim());
        let inv_t = 1.0 / self.temperature;
        for ((p, g), mut out) in self
            .probs
            .axis_iter(Axis(0))
            .zip(d_probs.axis_iter(Axis(0)))
            .zip(grad.axis_iter_mut(Axis(0)))
        {
            let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
            for ((o, &pj), &gj) in out.iter_mut().zip(p.iter()).zip(g.iter()) {
                *o = pj * (gj - dot) * inv_t;
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_pair_is_half_half() {
        let set = EvalSet::new(array![[0.0, 0.0]], vec![0]).unwrap();
        let s = summarize(&set, 1.0).unwrap();
        assert_eq!(s.probs.row(0).to_vec(), vec![0.5, 0.5]);
        assert_eq!(s.confidence[0], 0.5);
        assert!((s.norm_entropy[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_ratio_gives_three_quarters() {
        let set = EvalSet::new(array![[3f64.ln(), 0.0]], vec![0]).unwrap();
        let s = summarize(&set, 1.0).unwrap();
        assert!((s.probs[[0, 0]] - 0.75).abs() < 1e-15);
        assert!((s.probs[[0, 1]] - 0.25).abs() < 1e-15);
        assert!((s.confidence[0] - 0.75).abs() < 1e-15);
        assert!(s.correct[0]);
    }

    #[test]
    fn temperature_two_matches_reference_softmax() {
        // softmax([1,0,0]) = [e, 1, 1] / (e + 2)
        let e = std::f64::consts::E;
        let expected = [e / (e + 2.0), 1.0 / (e + 2.0), 1.0 / (e + 2.0)];
        let set = EvalSet::new(array![[2.0, 0.0, 0.0]], vec![1]).unwrap();
        let s = summarize(&set, 2.0).unwrap();
        for (a, b) in s.probs.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.probs[[0, 0]] - 0.5761).abs() < 1e-4);
        assert_eq!(s.predicted[0], 0);
        assert!(!s.correct[0]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_stable(&[1.0, 3.0, 2.0]).unwrap(), 1);
        assert_eq!(argmax_stable(&[5.0, 5.0, 1.0]).unwrap(), 0);
        assert_eq!(argmax_stable(&[-1.0]).unwrap(), 0);
        assert!(argmax_stable(&[]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(EvalSet::new(array![[0.0, f64::NAN]], vec![0]).is_err());
        assert!(EvalSet::new(array![[0.0, f64::INFINITY]], vec![0]).is_err());
        assert!(EvalSet::new(array![[0.0, 1.0]], vec![2]).is_err());
        assert!(EvalSet::new(array![[0.0], [1.0]], vec![0, 0]).is_err());
        assert!(EvalSet::new(Array2::zeros((0, 3)), vec![]).is_err());
        let set = EvalSet::new(array![[0.0, 1.0]], vec![0]).unwrap();
        assert!(matches!(summarize(&set, 0.0), Err(CalrefError::Domain(_))));
        assert!(summarize(&set, -1.0).is_err());
    }

    #[test]
    fn saturated_row_has_zero_entropy() {
        let set = EvalSet::new(array![[0.0, 2000.0]], vec![1]).unwrap();
        let s = summarize(&set, 1.0).unwrap();
        assert_eq!(s.entropy[0], 0.0);
        assert_eq!(s.confidence[0], 1.0);
    }
}
