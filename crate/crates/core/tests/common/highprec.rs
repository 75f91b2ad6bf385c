//! Extended-precision central differences for the smooth primary losses.
//!
//! Each loss is a mean of per-row terms, so the derivative with respect to
//! logit `(i, j)` only needs row `i`'s term. Rows are evaluated from scratch in
//! 128-bit arithmetic, so rounding noise is far below the step's truncation
//! error and the difference quotient is accurate to many more digits than the
//! f64 gradient it is compared with.

use astro_float::{BigFloat, Consts, RoundingMode};
use ndarray::Array2;

const PREC: usize = 128;
const RM: RoundingMode = RoundingMode::ToEven;
pub const HP_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub enum SmoothPrimary {
    Nll,
    Focal(f64),
    Mse,
}

struct Ctx {
    cc: Consts,
}

impl Ctx {
    fn f(&self, v: f64) -> BigFloat {
        BigFloat::from_f64(v, PREC)
    }

    /// `q^gamma`, multiplying out the integer part and taking a square root
    /// for a half, so the common exponents avoid the general power.
    fn power(&mut self, q: &BigFloat, gamma: f64) -> BigFloat {
        let whole = gamma.trunc();
        let frac = gamma - whole;
        let mut acc = if frac == 0.0 {
            self.f(1.0)
        } else if frac == 0.5 {
            q.sqrt(PREC, RM)
        } else {
            q.pow(&self.f(frac), PREC, RM, &mut self.cc)
        };
        for _ in 0..whole as u32 {
            acc = acc.mul(q, PREC, RM);
        }
        acc
    }

    /// Row term from unnormalized weights `w` with total `total`.
    fn row_term(&mut self, w: &[BigFloat], total: &BigFloat, label: usize, loss: SmoothPrimary) -> BigFloat {
        let p_label = w[label].div(total, PREC, RM);
        match loss {
            SmoothPrimary::Nll => p_label.ln(PREC, RM, &mut self.cc).neg(),
            SmoothPrimary::Focal(gamma) => {
                let q = self.f(1.0).sub(&p_label, PREC, RM);
                let weight = self.power(&q, gamma);
                weight.mul(&p_label.ln(PREC, RM, &mut self.cc), PREC, RM).neg()
            }
            SmoothPrimary::Mse => {
                let mut acc = self.f(0.0);
                for (k, wk) in w.iter().enumerate() {
                    let pk = wk.div(total, PREC, RM);
                    let d = if k == label { pk.sub(&self.f(1.0), PREC, RM) } else { pk };
                    acc = acc.add(&d.mul(&d, PREC, RM), PREC, RM);
                }
                acc
            }
        }
    }
}

fn to_f64(x: &BigFloat) -> f64 {
    format!("{x}").parse().expect("decimal rendering parses")
}

/// Central-difference gradient of the mean loss, computed in 128-bit
/// arithmetic with step [`HP_STEP`].
pub fn hp_gradient(logits: &Array2<f64>, labels: &[usize], loss: SmoothPrimary) -> Array2<f64> {
    let mut ctx = Ctx {
        cc: Consts::new().expect("constants cache"),
    };
    let (n, k) = logits.dim();
    // exp(z +- h) = exp(z) * exp(+-h), so each row needs only K exponentials
    let grow = ctx.f(HP_STEP).exp(PREC, RM, &mut ctx.cc);
    let shrink = ctx.f(-HP_STEP).exp(PREC, RM, &mut ctx.cc);
    let denom = ctx.f(2.0 * HP_STEP * n as f64);
    let mut grad = Array2::zeros((n, k));
    for i in 0..n {
        let w: Vec<BigFloat> = logits
            .row(i)
            .iter()
            .map(|&v| ctx.f(v).exp(PREC, RM, &mut ctx.cc))
            .collect();
        let mut total = ctx.f(0.0);
        for wk in &w {
            total = total.add(wk, PREC, RM);
        }
        for j in 0..k {
            let term = |factor: &BigFloat, ctx: &mut Ctx| {
                let mut moved = w.clone();
                moved[j] = w[j].mul(factor, PREC, RM);
                let t = total.sub(&w[j], PREC, RM).add(&moved[j], PREC, RM);
                ctx.row_term(&moved, &t, labels[i], loss)
            };
            let diff = term(&grow, &mut ctx).sub(&term(&shrink, &mut ctx), PREC, RM);
            grad[[i, j]] = to_f64(&diff.div(&denom, PREC, RM));
        }
    }
    grad
}
