//! Hard-binned calibration error under both binning schemes and both
//! estimators, plus the reliability table behind a reliability diagram.

use calref::binning::BinningSpec;
use calref::metrics::{ece, evaluation_ece, reliability_table, EceMode};
use calref::{summarize, EvalSet};
use ndarray::array;

fn main() -> calref::Result<()> {
    let logits = array![
        [2.5, 0.1, -1.0],
        [0.3, 0.2, 0.1],
        [-0.5, 3.0, 0.0],
        [1.0, 1.2, 0.9],
        [0.0, -1.0, 4.0],
        [2.0, 2.1, -3.0],
    ];
    let set = EvalSet::new(logits, vec![0, 2, 1, 0, 2, 0])?;
    let summary = summarize(&set, 1.0)?;

    for spec in [BinningSpec::equal_width(3)?, BinningSpec::equal_mass(3)?] {
        for mode in [EceMode::Binned, EceMode::LabelBinned] {
            let r = ece(&summary, &spec, 2.0, mode)?;
            println!("{:?} {:?}: {:.4}", spec.scheme, mode, r.value);
        }
    }
    println!("evaluation convention: {:.4}", evaluation_ece(&summary));

    let table = reliability_table(&summary, &BinningSpec::equal_width(4)?)?;
    for row in &table.rows {
        println!(
            "bin {} conf {:?} acc {:?} weight {:.3}",
            row.bin, row.mean_conf, row.mean_acc, row.weight
        );
    }
    Ok(())
}
