#![allow(dead_code)]

pub mod fd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsseg::encoder::{init_params, EncoderParams};
use wsseg::{LabelMask, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in the unit cube with random labels covering all classes
/// when `n >= k`.
pub fn random_cloud(seed: u64, n: usize, k: usize, colored: bool) -> PointCloud {
    let mut r = rng(seed);
    let pt = |r: &mut ChaCha8Rng| [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
    let xyz: Vec<[f64; 3]> = (0..n).map(|_| pt(&mut r)).collect();
    let rgb = colored.then(|| (0..n).map(|_| pt(&mut r)).collect());
    let labels = (0..n)
        .map(|i| if i < k { i } else { r.random_range(0..k) })
        .collect();
    PointCloud::new(xyz, rgb, labels, k).unwrap()
}

/// Small network with nonzero biases so no unit sits exactly at a kink.
pub fn small_params(seed: u64, features: usize, k: usize) -> EncoderParams {
    let mut p = init_params(seed, features, k, &[16, 16, 32], &[16]).unwrap();
    let mut r = rng(seed ^ 0xb1a5);
    for layer in &mut p.layers {
        for b in &mut layer.bias {
            *b = r.random_range(-0.1..0.1);
        }
    }
    p
}

pub fn mask_of(n: usize, idx: &[usize]) -> LabelMask {
    LabelMask::from_indices(n, idx).unwrap()
}
