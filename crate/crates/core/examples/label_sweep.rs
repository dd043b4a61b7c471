//! Test mIoU of the segmentation-only baseline as the labelled fraction
//! grows.

use wsseg::data_io::{generate_samples, ShapeFamily, SyntheticSpec};
use wsseg::trainer::{label_amount_sweep, sweep_csv};
use wsseg::TrainConfig;

fn main() -> wsseg::Result<()> {
    let train_set = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, 16, 128, 3))?;
    let test_set = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, 8, 128, 1003))?;
    let config = TrainConfig {
        lr: 0.1,
        epochs_stage1: 60,
        epochs_stage2: 0,
        encoder_widths: vec![32, 32, 64],
        decoder_widths: vec![64],
        seed: 3,
        ..TrainConfig::default()
    };
    let rows = label_amount_sweep(&train_set, &test_set, &[0.01, 0.05, 0.1, 0.5, 1.0], &config)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
