mod common;

use common::{random_cloud, small_params};
use proptest::prelude::*;
use wsseg::encoder::{forward, init_params, input_features, EncoderParams};
use wsseg::{Matrix, PointCloud};

/// Plain loops over the layer list, no tape.
fn reference_forward(p: &EncoderParams, cloud: &PointCloud) -> Vec<Vec<f64>> {
    let x = input_features(cloud);
    let dense = |input: &[f64], layer: usize| -> Vec<f64> {
        let l = &p.layers[layer];
        (0..l.fan_out())
            .map(|o| l.bias[o] + (0..l.fan_in()).map(|i| input[i] * l.weight[(i, o)]).sum::<f64>())
            .collect()
    };
    let relu = |v: Vec<f64>| v.into_iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
    let m = p.encoder_widths.len();
    let mut locals = Vec::new();
    let mut lasts = Vec::new();
    for i in 0..cloud.len() {
        let mut h = x.row(i).to_vec();
        let mut local = Vec::new();
        for layer in 0..m {
            h = relu(dense(&h, layer));
            if layer == m - 2 {
                local = h.clone();
            }
        }
        locals.push(local);
        lasts.push(h);
    }
    let width = lasts[0].len();
    let global: Vec<f64> = (0..width)
        .map(|c| lasts.iter().map(|h| h[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    locals
        .into_iter()
        .map(|local| {
            let mut h: Vec<f64> = local.iter().chain(&global).copied().collect();
            h = dense(&h, m);
            for layer in m + 1..p.layers.len() {
                h = dense(&relu(h), layer);
            }
            h
        })
        .collect()
}

fn assert_close(a: &Matrix, b: &[Vec<f64>], tol: f64) {
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let d = (a[(i, j)] - v).abs();
            assert!(d <= tol * (1.0 + v.abs()), "({i},{j}): {} vs {v}", a[(i, j)]);
        }
    }
}

#[test]
fn forward_matches_reference_loops() {
    for (seed, colored) in [(1, false), (2, true), (3, false)] {
        let cloud = random_cloud(seed, 37, 4, colored);
        let p = small_params(seed, cloud.num_features(), 4);
        let z = forward(&p, &cloud).unwrap();
        assert_close(z.matrix(), &reference_forward(&p, &cloud), 1e-12);
    }
}

#[test]
fn default_architecture_matches_reference() {
    let cloud = random_cloud(4, 20, 3, false);
    let p = init_params(9, 3, 3, &[64, 64, 128], &[128]).unwrap();
    let z = forward(&p, &cloud).unwrap();
    assert_close(z.matrix(), &reference_forward(&p, &cloud), 1e-12);
}

#[test]
fn deeper_head_matches_reference() {
    let cloud = random_cloud(5, 15, 2, false);
    let p = init_params(5, 3, 2, &[8, 12, 6, 10], &[7, 5]).unwrap();
    let z = forward(&p, &cloud).unwrap();
    assert_close(z.matrix(), &reference_forward(&p, &cloud), 1e-12);
}

#[test]
fn input_features_are_centred_with_unit_radius() {
    let cloud = random_cloud(6, 50, 2, true);
    let x = input_features(&cloud);
    for d in 0..3 {
        let mean: f64 = (0..50).map(|i| x[(i, d)]).sum::<f64>() / 50.0;
        assert!(mean.abs() < 1e-12);
    }
    let r = (0..50)
        .map(|i| (0..3).map(|d| x[(i, d)].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    assert!((r - 1.0).abs() < 1e-12);
    for i in 0..50 {
        assert_eq!(&x.row(i)[3..], &cloud.rgb().unwrap()[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn logits_permute_with_points(seed in 0u64..1000, n in 4usize..30, shift in 1usize..29) {
        let cloud = random_cloud(seed, n, 3, false);
        let p = small_params(seed, 3, 3);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permuted = PointCloud::new(
            perm.iter().map(|&i| cloud.xyz()[i]).collect(),
            None,
            perm.iter().map(|&i| cloud.labels()[i]).collect(),
            3,
        ).unwrap();
        let z = forward(&p, &cloud).unwrap();
        let zp = forward(&p, &permuted).unwrap();
        for (row, &src) in perm.iter().enumerate() {
            for c in 0..3 {
                prop_assert!((zp.matrix()[(row, c)] - z.matrix()[(src, c)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn logits_ignore_translation_and_scale(
        seed in 0u64..1000,
        t in prop::array::uniform3(-5.0f64..5.0),
        s in 0.1f64..10.0,
    ) {
        let cloud = random_cloud(seed, 12, 3, false);
        let p = small_params(seed, 3, 3);
        let moved = cloud
            .with_xyz(cloud.xyz().iter().map(|q| [s * q[0] + t[0], s * q[1] + t[1], s * q[2] + t[2]]).collect())
            .unwrap();
        let a = forward(&p, &cloud).unwrap();
        let b = forward(&p, &moved).unwrap();
        prop_assert!(a.matrix().sub(b.matrix()).frobenius_norm() < 1e-9);
    }
}
