//! k-NN affinity graph of a barbell, with must-link and must-not-link
//! edges between a few labelled points.
//!
//! Weights are `exp(-d/eta)`; the Laplacian rows sum to zero.

use wsseg::data_io::{generate_samples, sample_mask, MaskScheme, ShapeFamily, SyntheticSpec};
use wsseg::graph::{apply_link_constraints, knn_weights, GraphParams};

fn main() -> wsseg::Result<()> {
    let cloud = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, 1, 128, 3))?
        .remove(0)
        .cloud;
    let params = GraphParams {
        k: 8,
        eta: 0.1,
        ..GraphParams::default()
    };
    let g = knn_weights(&cloud, &params)?;
    println!("{} points, {} edges, symmetric: {}", g.len(), g.nnz(), g.is_symmetric());

    let worst = (0..g.len())
        .map(|i| g.laplacian().row(i).map(|(_, v)| v).sum::<f64>().abs())
        .fold(0.0, f64::max);
    println!("largest |row sum| of L: {worst:.1e}");

    let mask = sample_mask(&cloud, MaskScheme::OnePerCategory, 3)?;
    let constrained = apply_link_constraints(&g, &mask, cloud.labels())?;
    println!(
        "labelled points {:?}; with constraints: {} edges, negative weights: {}",
        mask.indices(),
        constrained.nnz(),
        constrained.has_negative_weights()
    );
    Ok(())
}
