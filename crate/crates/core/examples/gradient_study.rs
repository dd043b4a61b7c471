//! Variance of the weakly supervised gradient against the number of
//! labelled points, for a freshly initialized encoder.
//!
//! Masks are drawn without replacement from one cloud, so the variance
//! follows `σ²/n · (N − n)/N` and the fitted slope comes out a little
//! steeper than −1.

use wsseg::data_io::{generate_samples, ShapeFamily, SyntheticSpec};
use wsseg::encoder::init_params;
use wsseg::trainer::grad_study;

fn main() -> wsseg::Result<()> {
    let spec = SyntheticSpec::new(ShapeFamily::Barbell, 1, 256, 0);
    let clouds = vec![generate_samples(&spec)?.remove(0).cloud];
    let params = init_params(0, 3, 3, &[32, 32, 64], &[64])?;

    let r = grad_study(&clouds, &params, &[8, 16, 32, 64, 128, 256], 200, 0)?;
    for (n, v) in r.grid.iter().zip(&r.variances) {
        println!("n = {n:>3}: variance {v:.3e}");
    }
    println!("slope {:.3} ± {:.3} ({} parameters)", r.slope, r.slope_se, r.num_params);
    Ok(())
}
