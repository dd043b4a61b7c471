//! Label propagation as a denoiser: one-hot logits with 5% of the points
//! flipped to a wrong part are smoothed along the k-NN graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsseg::data_io::{generate_samples, ShapeFamily, SyntheticSpec};
use wsseg::graph::{knn_weights, GraphParams};
use wsseg::metrics::miou;
use wsseg::propagate::{propagate, propagate_dense_oracle};
use wsseg::{Logits, Matrix};

fn main() -> wsseg::Result<()> {
    let cloud = generate_samples(&SyntheticSpec::new(ShapeFamily::Barbell, 1, 256, 5))?
        .remove(0)
        .cloud;
    let labels = cloud.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noisy: Vec<usize> = labels
        .iter()
        .map(|&l| if rng.random::<f64>() < 0.05 { (l + rng.random_range(1..3)) % 3 } else { l })
        .collect();
    let z = Logits::new(Matrix::from_fn(labels.len(), 3, |i, c| if noisy[i] == c { 10.0 } else { 0.0 }))?;

    let g = knn_weights(&cloud, &GraphParams::default())?;
    for gamma in [0.5, 1.0, 5.0, 50.0] {
        let out = propagate(&z, &g, gamma, 1e-8)?;
        println!(
            "gamma {gamma:>4}: mIoU {:.4} (residual {:.1e})",
            miou(&out.predicted, labels, 3)?.sample_miou,
            out.residual
        );
    }
    println!("without propagation: mIoU {:.4}", miou(&noisy, labels, 3)?.sample_miou);

    // the dense inverse agrees with the iterative solve
    let fast = propagate(&z, &g, 1.0, 1e-10)?.refined;
    let dense = propagate_dense_oracle(&z, &g, 1.0)?;
    let rel = fast.matrix().sub(dense.matrix()).frobenius_norm() / dense.matrix().frobenius_norm();
    println!("relative difference to the dense solution: {rel:.1e}");
    Ok(())
}
