//! Random rotation about z combined with mirror flips and an x/y swap.
//! A set bit keeps its axis: `a` and `b` negate x and y when false, and
//! `c` swaps them when false.

use wsseg::augment::{apply_transform, sample_transform, transform_from_draw};
use wsseg::data_io::{generate_samples, ShapeFamily, SyntheticSpec};

fn main() -> wsseg::Result<()> {
    let cloud = generate_samples(&SyntheticSpec::new(ShapeFamily::Rocket, 1, 64, 2))?
        .remove(0)
        .cloud;

    for seed in 0..4 {
        let t = sample_transform(seed);
        let d = t.draw;
        println!(
            "seed {seed}: theta {:.3} a {} b {} c {} det {:+.0}",
            d.theta,
            d.a,
            d.b,
            d.c,
            t.determinant()
        );
    }

    let t = sample_transform(11);
    let moved = apply_transform(&cloud, &t)?;
    let dist = |p: [f64; 3], q: [f64; 3]| (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>().sqrt();
    let before = dist(cloud.xyz()[0], cloud.xyz()[1]);
    let after = dist(moved.xyz()[0], moved.xyz()[1]);
    println!("distance before {before:.12} after {after:.12}");
    assert_eq!(moved.labels(), cloud.labels());

    let identity = transform_from_draw(0.0, true, true, true);
    assert_eq!(apply_transform(&cloud, &identity)?, cloud);
    println!("theta = 0 with all bits set leaves the cloud unchanged");
    Ok(())
}
