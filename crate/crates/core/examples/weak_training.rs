//! Two-stage training on barbells with 10% of the points labelled.
//!
//! Stage 1 fits the segmentation loss on the labelled points. Stage 2 adds
//! the multi-instance, Siamese and smoothness terms. The test set is then
//! scored with and without label propagation.
//!
//! The network is smaller and the schedule shorter than the defaults so the
//! example finishes in seconds; pass `--full` for the desk-scale setting.

use wsseg::data_io::{generate_samples, sample_masks, MaskScheme, ShapeFamily, SyntheticSpec};
use wsseg::trainer::{evaluate, train, TrainSample};
use wsseg::{Ablation, PointCloud, TrainConfig};

fn main() -> wsseg::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let (shapes, epochs) = if full { (32, 60) } else { (12, 15) };
    let train_set = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, shapes, 256, 1))?;
    let test_set = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, 8, 256, 1001))?;

    let config = TrainConfig {
        lr: 0.1,
        eta: 0.1,
        lambda_mil: 0.1,
        lambda_sia: 0.1,
        lambda_smo: 0.1,
        epochs_stage1: epochs,
        epochs_stage2: epochs,
        encoder_widths: if full { vec![64, 64, 128] } else { vec![32, 32, 64] },
        decoder_widths: if full { vec![128] } else { vec![64] },
        seed: 1,
        ..TrainConfig::default()
    };

    let clouds: Vec<&PointCloud> = train_set.iter().map(|s| &s.cloud).collect();
    let masks = sample_masks(&clouds, MaskScheme::FractionUniform(0.1), config.seed)?;
    let samples: Vec<TrainSample> = train_set
        .iter()
        .zip(masks)
        .map(|(s, m)| TrainSample::new(s, m))
        .collect();

    let run = train(&samples, &config, &Ablation::ALL)?;
    for (epoch, l) in run.losses.iter().enumerate().step_by(5) {
        println!(
            "epoch {epoch:>3}: seg {:.4} mil {:.4} sia {:.4} smo {:.4}",
            l.seg, l.mil, l.sia, l.smo
        );
    }

    for prop in [false, true] {
        let eval = evaluate(&run.params, &test_set, None, &config, prop)?;
        println!(
            "propagation {prop}: cat_avg {:.4} samp_avg {:.4}",
            eval.summary.aggregate.cat_avg, eval.summary.aggregate.samp_avg
        );
    }
    println!("trained in {:.1?}", run.wall_time);
    Ok(())
}
