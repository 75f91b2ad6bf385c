//! Soft-binned calibration error: its gradient with respect to logits, and
//! how it approaches the hard estimate as the binning temperature shrinks.

use calref::binning::{soft_membership, BinningSpec, SoftBinningSpec};
use calref::metrics::{ece, sb_ece, sb_ece_grad, EceMode};
use calref::{summarize, EvalSet};
use ndarray::array;

fn main() -> calref::Result<()> {
    let set = EvalSet::new(
        array![[1.6, 0.2], [0.1, 0.9], [2.2, -0.4], [0.4, 0.3], [-1.0, 1.5]],
        vec![0, 0, 0, 1, 1],
    )?;
    let summary = summarize(&set, 1.0)?;
    let hard = ece(&summary, &BinningSpec::equal_width(5)?, 2.0, EceMode::LabelBinned)?.value;
    println!("hard: {hard:.6}");
    for t in [1e-1, 1e-2, 1e-3, 1e-5] {
        let spec = SoftBinningSpec::new(5, t)?;
        println!(
            "T = {t:e}: {:.6}",
            sb_ece(&summary, &spec, 2.0, EceMode::LabelBinned)?.value
        );
    }

    let spec = SoftBinningSpec::new(5, 0.01)?;
    println!("membership of 0.73: {:.3?}", soft_membership(0.73, &spec)?);
    println!(
        "d/dlogits:\n{:.4}",
        sb_ece_grad(&summary, &spec, 2.0, EceMode::LabelBinned)?
    );
    Ok(())
}
