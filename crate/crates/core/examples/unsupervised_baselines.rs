//! k-means and normalized cut on synthetic shapes, scored after matching
//! clusters to parts.

use wsseg::baselines::{cloud_features, kmeans, ncut};
use wsseg::data_io::{generate_samples, ShapeFamily, SyntheticSpec};
use wsseg::graph::{knn_weights, GraphParams};
use wsseg::metrics::best_permutation_miou;

fn main() -> wsseg::Result<()> {
    for family in [ShapeFamily::Barbell, ShapeFamily::Table, ShapeFamily::Rocket] {
        let cloud = generate_samples(&SyntheticSpec::new(family, 1, 256, 4))?.remove(0).cloud;
        let k = cloud.num_classes();
        let feats = cloud_features(&cloud);
        let graph = knn_weights(
            &cloud,
            &GraphParams {
                eta: 0.1,
                ..GraphParams::default()
            },
        )?;

        let km = kmeans(&feats, k, 0, 100)?;
        let nc = ncut(&graph, &feats, k, 0)?;
        let score = |a: &[usize]| best_permutation_miou(a, cloud.labels(), k).map(|r| r.sample_miou);
        println!(
            "{family}: kmeans {:.3} ({} iterations), ncut {:.3}",
            score(&km.assignment)?,
            km.objective_trace.len(),
            score(&nc.assignment)?
        );
    }
    Ok(())
}
