mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use wsseg::augment::{apply_transform, sample_transform, transform_from_draw, RigidTransform};

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt()
}

fn orthogonality_error(t: &RigidTransform) -> f64 {
    let m = &t.matrix;
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let rtr: f64 = (0..3).map(|l| m[l][i] * m[l][j]).sum();
            let id = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((rtr - id).abs());
        }
    }
    worst
}

#[test]
fn identity_draw_is_exact() {
    let t = transform_from_draw(0.0, true, true, true);
    assert_eq!(t.matrix, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    assert_eq!(RigidTransform::identity().matrix, t.matrix);
}

#[test]
fn thousand_sampled_transforms_are_isometries() {
    let pts: Vec<[f64; 3]> = random_points(99, 20);
    for seed in 0..1000 {
        let t = sample_transform(seed);
        assert!(orthogonality_error(&t) < 1e-10);
        assert!((t.determinant().abs() - 1.0).abs() < 1e-10);
        let moved: Vec<[f64; 3]> = pts.iter().map(|&p| t.apply_point(p)).collect();
        for i in 0..pts.len() {
            for j in 0..i {
                assert!((dist(pts[i], pts[j]) - dist(moved[i], moved[j])).abs() < 1e-9);
            }
        }
    }
}

fn random_points(seed: u64, n: usize) -> Vec<[f64; 3]> {
    use rand::Rng;
    let mut r = common::rng(seed);
    (0..n)
        .map(|_| [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)])
        .collect()
}

#[test]
fn mirror_and_swap_hand_cases() {
    let p = [1.0, 2.0, 3.0];
    let neg_x = transform_from_draw(0.0, false, true, true);
    assert_eq!(neg_x.apply_point(p), [-1.0, 2.0, 3.0]);
    let neg_y = transform_from_draw(0.0, true, false, true);
    assert_eq!(neg_y.apply_point(p), [1.0, -2.0, 3.0]);
    let swap = transform_from_draw(0.0, true, true, false);
    assert_eq!(swap.apply_point(p), [2.0, 1.0, 3.0]);
    let quarter = transform_from_draw(PI / 2.0, true, true, true);
    let q = quarter.apply_point(p);
    assert!((q[0] + 2.0).abs() < 1e-15 && (q[1] - 1.0).abs() < 1e-15 && q[2] == 3.0);
}

#[test]
fn z_is_never_touched() {
    for seed in 0..200 {
        let t = sample_transform(seed);
        assert_eq!(t.matrix[2], [0.0, 0.0, 1.0]);
        assert_eq!(t.matrix[0][2], 0.0);
        assert_eq!(t.matrix[1][2], 0.0);
    }
}

#[test]
fn draws_cover_all_mirror_patterns() {
    let mut seen = std::collections::HashSet::new();
    for seed in 0..400 {
        let d = sample_transform(seed).draw;
        assert!((0.0..2.0 * PI).contains(&d.theta));
        seen.insert((d.a, d.b, d.c));
    }
    assert_eq!(seen.len(), 8);
}

#[test]
fn sampling_is_deterministic() {
    assert_eq!(sample_transform(42), sample_transform(42));
    assert_ne!(sample_transform(42), sample_transform(43));
}

#[test]
fn clouds_keep_labels_and_colors() {
    let c = common::random_cloud(4, 30, 3, true);
    let t = sample_transform(4);
    let moved = apply_transform(&c, &t).unwrap();
    assert_eq!(moved.labels(), c.labels());
    assert_eq!(moved.rgb(), c.rgb());
    for (a, b) in c.xyz().iter().zip(moved.xyz()) {
        assert_eq!(t.apply_point(*a), *b);
    }
}

proptest! {
    #[test]
    fn any_draw_is_orthogonal(theta in 0.0f64..(2.0 * PI), a: bool, b: bool, c: bool) {
        let t = transform_from_draw(theta, a, b, c);
        prop_assert!(orthogonality_error(&t) < 1e-10);
        let mirrored = [a, b].iter().filter(|x| !**x).count() + usize::from(!c);
        let expect = if mirrored % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((t.determinant() - expect).abs() < 1e-12);
    }
}
