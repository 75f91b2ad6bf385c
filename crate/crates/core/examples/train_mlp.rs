//! Train the same network with and without a soft AvUC term on a task with
//! label noise and compare test metrics.

use calref::losses::{LossSpec, PrimaryLoss, SecondaryLoss};
use calref::trainer::{evaluate, make_synthetic_task, train, TaskKind, TrainConfig};

fn main() -> calref::Result<()> {
    let task = make_synthetic_task(TaskKind::LabelNoiseBlobs { flip: 0.2 }, 5000, 1)?;
    let plain = LossSpec::primary_only(PrimaryLoss::Nll);
    let soft = LossSpec {
        primary: PrimaryLoss::Nll,
        secondary: SecondaryLoss::SAvuc {
            kappa: 0.9,
            temperature: 0.5,
        },
        beta: 3.0,
        lambda: 0.0,
    };
    for (name, loss) in [("nll", plain), ("nll + s-avuc", soft)] {
        let report = train(&task.train, &task.val, &TrainConfig::new(loss, 60, 1))?;
        let m = evaluate(&report.model, &task.test)?;
        println!(
            "{name}: {} params, test accuracy {:.3}, ECE {:.2}%, NLL {:.3}",
            report.model.num_params(),
            m.accuracy,
            100.0 * m.ece,
            m.nll
        );
    }
    Ok(())
}
