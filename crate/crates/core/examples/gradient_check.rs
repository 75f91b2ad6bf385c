//! Compare an analytic logit gradient with central finite differences.

use calref::gradcheck::{finite_diff_check, DEFAULT_STEP};
use calref::losses::focal;
use calref::{summarize, EvalSet};
use ndarray::{array, Array2};

fn focal_value(z: &Array2<f64>, labels: &[usize]) -> f64 {
    let s = summarize(&EvalSet::new(z.clone(), labels.to_vec()).unwrap(), 1.0).unwrap();
    focal(&s, 2.0).value
}

fn main() -> calref::Result<()> {
    let z = array![[0.3, -1.2, 0.8], [1.5, 0.0, -0.4]];
    let labels = [2, 1];
    let analytic = focal(&summarize(&EvalSet::new(z.clone(), labels.to_vec())?, 1.0)?, 2.0).grad;
    let err = finite_diff_check(|x| focal_value(x, &labels), &z, &analytic, DEFAULT_STEP);
    println!("focal loss gradient, worst relative error {err:.2e}");
    Ok(())
}
