//! The four loss terms on one randomly initialized forward pass, and how
//! the weights combine them.

use wsseg::augment::{apply_transform, sample_transform};
use wsseg::data_io::{generate_samples, sample_mask, MaskScheme, ShapeFamily, SyntheticSpec};
use wsseg::encoder::{forward, init_params};
use wsseg::graph::{knn_weights, GraphParams};
use wsseg::losses::{mil_loss, seg_loss, siamese_loss, smooth_loss, total_loss, LossWeights};
use wsseg::types::one_hot;
use wsseg::{Ablation, SampleLevelLabel, TrainConfig};

fn main() -> wsseg::Result<()> {
    let cloud = generate_samples(&SyntheticSpec::new(ShapeFamily::Table, 1, 128, 9))?
        .remove(0)
        .cloud;
    let k = cloud.num_classes();
    let params = init_params(9, 3, k, &[32, 32, 64], &[64])?;
    let z = forward(&params, &cloud)?;

    let mask = sample_mask(&cloud, MaskScheme::FractionUniform(0.1), 9)?;
    let seg = seg_loss(&z, &one_hot(cloud.labels(), k)?, &mask)?.value;
    let label = SampleLevelLabel::from_mask(cloud.labels(), &mask, k).expect("mask is not empty");
    let mil = mil_loss(&z, &label)?.value;
    let za = forward(&params, &apply_transform(&cloud, &sample_transform(9))?)?;
    let sia = siamese_loss(&z, &za)?.value;
    let graph = knn_weights(&cloud, &GraphParams { eta: 0.1, ..GraphParams::default() })?;
    let smo = smooth_loss(&z, &graph)?.value;

    // ln K is the seg loss of uniform predictions
    println!("seg {seg:.4} (ln K = {:.4})", (k as f64).ln());
    println!("mil {mil:.4} sia {sia:.6} smo {smo:.6}");

    let weights = LossWeights::new(&TrainConfig::default(), &Ablation::ALL);
    println!("total with unit weights {:.4}", total_loss(seg, mil, sia, smo, &weights).total);
    let seg_only = LossWeights::new(&TrainConfig::default(), &Ablation::NONE);
    println!("total with auxiliary terms off {:.4}", total_loss(seg, mil, sia, smo, &seg_only).total);
    Ok(())
}
