mod common;

use wsseg::data_io::{generate_samples, ShapeFamily, SyntheticSpec};
use wsseg::encoder::{forward_recorded, init_params, EncoderParams, Tape};
use wsseg::losses::seg_loss;
use wsseg::trainer::{grad_study, per_point_gradients};
use wsseg::types::one_hot;
use wsseg::{LabelMask, PointCloud};

fn setup(points: usize) -> (Vec<PointCloud>, EncoderParams) {
    let spec = SyntheticSpec::new(ShapeFamily::Barbell, 1, points, 21);
    let clouds = vec![generate_samples(&spec).unwrap().remove(0).cloud];
    let params = init_params(21, 3, 3, &[16, 16, 32], &[16]).unwrap();
    (clouds, params)
}

#[test]
fn per_point_rows_average_to_the_full_gradient() {
    let (clouds, params) = setup(40);
    let g = per_point_gradients(&params, &clouds).unwrap();
    let cloud = &clouds[0];
    let mut tape = Tape::new();
    let z = forward_recorded(&params, cloud, &mut tape).unwrap();
    let onehot = one_hot(cloud.labels(), 3).unwrap();
    let l = seg_loss(&z, &onehot, &LabelMask::full(40)).unwrap();
    let full = tape.backward(&l.grad).unwrap().to_flat();
    for (j, f) in full.iter().enumerate() {
        let mean: f64 = (0..40).map(|i| g[(i, j)]).sum::<f64>() / 40.0;
        assert!((mean - f).abs() <= 1e-12 * (1.0 + f.abs()), "param {j}");
    }
}

#[test]
fn full_label_count_has_zero_variance() {
    let (clouds, params) = setup(64);
    let r = grad_study(&clouds, &params, &[8, 64], 5, 1).unwrap();
    assert_eq!(r.variances[1], 0.0);
    assert!(r.variances[0] > 0.0);
}

/// Expected variance of a size-`n` subset mean drawn without replacement,
/// averaged over parameters.
fn finite_population_variance(clouds: &[PointCloud], params: &EncoderParams, n: usize) -> f64 {
    let g = per_point_gradients(params, clouds).unwrap();
    let (big_n, p) = g.shape();
    let mut total = 0.0;
    for j in 0..p {
        let col = g.column(j);
        let mean = col.iter().sum::<f64>() / big_n as f64;
        let s2 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (big_n - 1) as f64;
        total += s2 / n as f64 * (big_n - n) as f64 / big_n as f64;
    }
    total / p as f64
}

#[test]
fn variances_match_sampling_theory() {
    let (clouds, params) = setup(128);
    let grid = [4, 16, 64];
    let r = grad_study(&clouds, &params, &grid, 400, 3).unwrap();
    for (&n, v) in grid.iter().zip(&r.variances) {
        let expect = finite_population_variance(&clouds, &params, n);
        assert!((v / expect - 1.0).abs() < 0.25, "n={n}: {v} vs {expect}");
    }
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

#[test]
fn slope_matches_finite_population_theory() {
    let (clouds, params) = setup(256);
    let grid = [8, 16, 32, 64, 128];
    let r = grad_study(&clouds, &params, &grid, 400, 4).unwrap();
    let xs: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = grid
        .iter()
        .map(|&n| finite_population_variance(&clouds, &params, n).ln())
        .collect();
    let theory = fit_slope(&xs, &ys);
    assert!((theory + 1.2226).abs() < 1e-3, "{theory}");
    assert!((r.slope - theory).abs() < 4.0 * r.slope_se, "{} vs {theory}", r.slope);
    assert!(r.variances.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn slope_is_near_minus_one_on_the_default_encoder() {
    let spec = SyntheticSpec::new(ShapeFamily::Barbell, 1, 256, 0);
    let clouds = vec![generate_samples(&spec).unwrap().remove(0).cloud];
    let params = init_params(0, 3, 3, &[64, 64, 128], &[128]).unwrap();
    let r = grad_study(&clouds, &params, &[8, 16, 32, 64, 128], 1000, 0).unwrap();
    assert!((r.slope + 1.0).abs() <= 0.25, "{}", r.slope);
}

#[test]
fn more_draws_shrink_the_slope_error() {
    let (clouds, params) = setup(128);
    let grid = [4, 8, 16, 32];
    let few = grad_study(&clouds, &params, &grid, 30, 5).unwrap();
    let many = grad_study(&clouds, &params, &grid, 120, 5).unwrap();
    assert!(many.slope_se < few.slope_se, "{} vs {}", many.slope_se, few.slope_se);
}

#[test]
fn study_is_deterministic() {
    let (clouds, params) = setup(32);
    let a = grad_study(&clouds, &params, &[2, 8], 10, 6).unwrap();
    assert_eq!(a, grad_study(&clouds, &params, &[2, 8], 10, 6).unwrap());
}

#[test]
fn invalid_grids_are_rejected() {
    let (clouds, params) = setup(32);
    assert!(grad_study(&clouds, &params, &[8, 64], 5, 0).unwrap_err().is_validation());
    assert!(grad_study(&clouds, &params, &[8, 8], 5, 0).is_err());
    assert!(grad_study(&clouds, &params, &[0, 8], 5, 0).is_err());
    assert!(grad_study(&clouds, &params, &[8], 1, 0).is_err());
    assert!(grad_study(&[], &params, &[8], 5, 0).is_err());
    let _ = common::rng(0);
}
