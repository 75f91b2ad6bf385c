//! Small numeric helpers shared by the metric and loss code.

/// Neumaier-compensated sum. All reductions over examples go through this so
/// results stay stable for large N and independent of chunking.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut n = 0usize;
    let s = compensated_sum(values.into_iter().inspect(|_| n += 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Writes `softmax(row)` into `out` using max-subtraction.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    debug_assert_eq!(row.len(), out.len());
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(row) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    softmax_into(row, &mut out);
    out
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Signed `|x|^(p-1) * sign(x) * p`, the derivative of `|x|^p`.
pub(crate) fn abs_pow_deriv(x: f64, p: f64) -> f64 {
    // subgradient 0 at the kink when p == 1
    if x == 0.0 {
        0.0
    } else {
        p * x.abs().powf(p - 1.0) * x.signum()
    }
}
