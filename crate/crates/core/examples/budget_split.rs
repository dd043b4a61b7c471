//! Spending the same labelling budget on many lightly labelled clouds or on
//! a few fully labelled ones.

use wsseg::data_io::{generate_samples, BudgetSplit, ShapeFamily, SyntheticSpec};
use wsseg::trainer::{budget_csv, budget_experiment};
use wsseg::{Ablation, TrainConfig};

fn main() -> wsseg::Result<()> {
    let train_set = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, 20, 128, 2))?;
    let test_set = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, 8, 128, 1002))?;
    let config = TrainConfig {
        lr: 0.1,
        eta: 0.1,
        epochs_stage1: 20,
        epochs_stage2: 0,
        encoder_widths: vec![32, 32, 64],
        decoder_widths: vec![64],
        use_propagation: false,
        seed: 2,
        ..TrainConfig::default()
    };
    let splits: Vec<BudgetSplit> = ["0.1:1.0", "0.5:0.2", "1.0:0.1"]
        .iter()
        .map(|s| s.parse())
        .collect::<wsseg::Result<_>>()?;
    let rows = budget_experiment(&train_set, &test_set, 0.1, &splits, &config, &Ablation::NONE)?;
    print!("{}", budget_csv(&rows));
    Ok(())
}
