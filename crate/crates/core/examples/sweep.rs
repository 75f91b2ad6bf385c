//! One-at-a-time hyperparameter sweep scored on the validation split.

use calref::losses::{LossSpec, PrimaryLoss, SecondaryLoss};
use calref::trainer::{
    make_synthetic_task, sweep_one_at_a_time, train, SweepGrid, SweepOutcome, TaskKind, TrainConfig,
};

fn main() -> calref::Result<()> {
    let task = make_synthetic_task(TaskKind::NoisyMoons, 1000, 3)?;
    let baseline = TrainConfig::new(
        LossSpec {
            primary: PrimaryLoss::Nll,
            secondary: SecondaryLoss::SAvuc {
                kappa: 0.5,
                temperature: 1.0,
            },
            beta: 1.0,
            lambda: 0.0,
        },
        20,
        3,
    );
    let grid = SweepGrid {
        kappa: vec![0.5, 0.9],
        temperature: vec![0.5, 1.0],
        beta: vec![0.5, 3.0],
        lambda: vec![0.0, 1e-4],
    };
    let result = sweep_one_at_a_time(&baseline, &grid, |c| {
        let last = train(&task.train, &task.val, c)?.final_epoch().clone();
        Ok(SweepOutcome {
            val_accuracy: last.val_accuracy,
            val_ece: last.val_ece,
        })
    })?;
    for row in &result.rows {
        println!("{row:?}");
    }
    println!("selected: {:?}", result.selected.loss);
    Ok(())
}
