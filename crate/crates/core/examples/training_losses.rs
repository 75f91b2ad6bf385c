//! Primary losses and the composite training loss with a calibration term.

use calref::losses::{composite_loss, focal, mse, nll, LossSpec, PrimaryLoss, SecondaryLoss};
use calref::metrics::EceMode;
use calref::{summarize, EvalSet};
use ndarray::array;

fn main() -> calref::Result<()> {
    let logits = array![[2.0, 0.5, -1.0], [0.2, 0.1, 1.4], [1.0, 1.1, 0.9]];
    let labels = vec![0, 1, 1];
    let s = summarize(&EvalSet::new(logits.clone(), labels.clone())?, 1.0)?;
    println!("nll {:.4}", nll(&s).value);
    println!("focal(2) {:.4}", focal(&s, 2.0).value);
    println!("mse {:.4}", mse(&s).value);

    let spec = LossSpec {
        primary: PrimaryLoss::Focal { gamma: 2.0 },
        secondary: SecondaryLoss::SbEce {
            bins: 15,
            temperature: 0.01,
            p: 2.0,
            mode: EceMode::LabelBinned,
        },
        beta: 0.5,
        lambda: 1e-4,
    };
    // weights' squared norm is supplied by the model
    let out = composite_loss(&logits, &labels, &spec, 12.0)?;
    println!("composite {:.4} = {:?}", out.value, out.components);
    println!("{:.4}", out.grad_logits);
    Ok(())
}
