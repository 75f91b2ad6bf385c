//! Accuracy-versus-uncertainty losses: hard AvUC with and without gradient
//! stopping, and the soft variant built on the soft-uncertainty function.

use calref::avuc::{avuc, avuc_grad, s_avuc, s_avuc_grad, soft_uncertainty, AvucSpec, SoftAvucSpec};
use calref::{summarize, EvalSet};
use ndarray::array;

fn main() -> calref::Result<()> {
    for h in [0.0, 0.1, 0.3, 0.5, 0.7, 1.0] {
        println!("t({h}) with kappa 0.3, T 0.5 = {:.4}", soft_uncertainty(h, 0.3, 0.5)?);
    }

    let set = EvalSet::new(
        array![
            [3.0, 0.0, 0.0],
            [0.4, 0.5, 0.3],
            [2.0, 1.9, 0.0],
            [0.0, 0.1, 2.5],
            [1.0, 0.0, 0.2]
        ],
        vec![1, 0, 0, 2, 2],
    )?;
    let s = summarize(&set, 1.0)?;

    let kappa = 0.6 * 3f64.ln();
    for gradient_stopping in [false, true] {
        let spec = AvucSpec {
            kappa,
            gradient_stopping,
        };
        let v = avuc(&s, &spec)?;
        println!("avuc (stopping {gradient_stopping}): {:.4} {:?}", v.value, v.counts);
        println!("{:.4}", avuc_grad(&s, &spec)?);
    }

    let spec = SoftAvucSpec {
        kappa: 0.5,
        temperature: 0.5,
    };
    println!("s-avuc: {:.4}", s_avuc(&s, &spec)?.value);
    println!("{:.4}", s_avuc_grad(&s, &spec)?);
    Ok(())
}
