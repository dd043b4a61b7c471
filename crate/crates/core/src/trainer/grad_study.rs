//! How well the gradient of a few labelled points approximates the gradient
//! of all of them.
//!
//! For fixed parameters, every point's cross-entropy gradient is computed
//! once. For each label count `n`, random subsets of size `n` give the
//! masked-mean gradient; its difference to the full mean is recorded per
//! parameter, the variance over draws is averaged over parameters, and the
//! log-log slope of variance against `n` is fitted. Independent draws would
//! give slope −1; sampling without replacement from a finite cloud of `N`
//! points scales the variance by `(N − n)/(N − 1)`, which steepens it.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;

use crate::encoder::{self, EncoderParams, Tape};
use crate::error::{Error, Result};
use crate::losses::softmax_rows;
use crate::rng;
use crate::types::{Matrix, PointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct GradStudyResult {
    pub grid: Vec<usize>,
    /// Parameter-averaged variance of `∇l_w − ∇l_f` per grid entry.
    pub variances: Vec<f64>,
    /// Least-squares slope of `ln variance` on `ln n` over entries with
    /// positive variance.
    pub slope: f64,
    pub intercept: f64,
    /// Bootstrap standard error of the slope (draws resampled per `n`).
    pub slope_se: f64,
    pub draws: usize,
    pub num_points: usize,
    pub num_params: usize,
}

impl GradStudyResult {
    /// `n,variance` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,variance\n");
        for (n, v) in self.grid.iter().zip(&self.variances) {
            let _ = writeln!(s, "{n},{v:.16e}");
        }
        s
    }
}

/// Gradient of each point's cross-entropy w.r.t. all parameters, one row
/// per point (clouds concatenated in order).
pub fn per_point_gradients(params: &EncoderParams, clouds: &[PointCloud]) -> Result<Matrix> {
    let total: usize = clouds.iter().map(PointCloud::len).sum();
    let p = params.num_params();
    let mut rows = Vec::with_capacity(total);
    for cloud in clouds {
        let mut tape = Tape::new();
        let z = encoder::forward_recorded(params, cloud, &mut tape)?;
        let probs = softmax_rows(&z);
        let k = z.cols();
        let cloud_rows: Vec<Vec<f64>> = (0..cloud.len())
            .into_par_iter()
            .map(|i| {
                let mut dz = Matrix::zeros(z.rows(), k);
                dz.row_mut(i).copy_from_slice(probs.row(i));
                dz[(i, cloud.labels()[i])] -= 1.0;
                Ok(tape.backward(&dz)?.to_flat())
            })
            .collect::<Result<_>>()?;
        rows.extend(cloud_rows);
    }
    Ok(Matrix::from_fn(total, p, |i, j| rows[i][j]))
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Parameter-averaged sample variance of draws weighted by `counts`
/// (all ones for the plain estimate, multinomial for a bootstrap replicate).
fn weighted_variance(gram: &[Vec<f64>], counts: &[f64], num_params: usize) -> f64 {
    let d = counts.len() as f64;
    let sq: f64 = counts.iter().enumerate().map(|(a, c)| c * gram[a][a]).sum();
    let mut mean_sq = 0.0;
    for (a, ca) in counts.iter().enumerate() {
        for (b, cb) in counts.iter().enumerate() {
            mean_sq += ca * cb * gram[a][b];
        }
    }
    mean_sq /= d * d;
    ((sq - d * mean_sq) / (d - 1.0) / num_params as f64).max(0.0)
}

const BOOTSTRAP_REPLICATES: usize = 200;

/// Runs the study for fixed `params`; no training happens here.
pub fn grad_study(
    clouds: &[PointCloud],
    params: &EncoderParams,
    grid: &[usize],
    draws: usize,
    seed: u64,
) -> Result<GradStudyResult> {
    if clouds.is_empty() {
        return Err(Error::validation("gradient study needs at least one cloud"));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::validation("label-count grid must be positive and strictly increasing"));
    }
    if draws < 2 {
        return Err(Error::validation("at least two draws per label count are needed"));
    }
    let g = per_point_gradients(params, clouds)?;
    let (n_total, p) = g.shape();
    if let Some(&n) = grid.iter().find(|&&n| n > n_total) {
        return Err(Error::validation(format!("label count {n} exceeds {n_total} points")));
    }
    let mut full = vec![0.0; p];
    for row in g.row_iter() {
        for (f, v) in full.iter_mut().zip(row) {
            *f += v;
        }
    }
    full.iter_mut().for_each(|f| *f /= n_total as f64);

    // Gram matrix of the per-draw difference vectors for every n.
    let grams: Vec<Vec<Vec<f64>>> = grid
        .iter()
        .map(|&n| {
            let diffs: Vec<Vec<f64>> = (0..draws)
                .into_par_iter()
                .map(|d| {
                    let mut r = rng::rng_for(seed, &[rng::stream::GRAD_STUDY, n as u64, d as u64]);
                    let mut idx = index::sample(&mut r, n_total, n).into_vec();
                    // summing in index order makes n = N reproduce the full mean exactly
                    idx.sort_unstable();
                    let mut m = vec![0.0; p];
                    for &i in &idx {
                        for (a, v) in m.iter_mut().zip(g.row(i)) {
                            *a += v;
                        }
                    }
                    m.iter_mut()
                        .zip(&full)
                        .for_each(|(a, f)| *a = *a / n as f64 - f);
                    m
                })
                .collect();
            let d = Matrix::from_fn(draws, p, |a, j| diffs[a][j]);
            let gram = d.matmul_t(&d);
            (0..draws).map(|a| gram.row(a).to_vec()).collect()
        })
        .collect();

    let ones = vec![1.0; draws];
    let variances: Vec<f64> = grams.iter().map(|gm| weighted_variance(gm, &ones, p)).collect();
    let fit = |vars: &[f64]| -> Option<(f64, f64)> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = grid
            .iter()
            .zip(vars)
            .filter(|(_, v)| **v > 0.0)
            .map(|(n, v)| ((*n as f64).ln(), v.ln()))
            .unzip();
        (xs.len() >= 2).then(|| fit_line(&xs, &ys))
    };
    let (slope, intercept) = fit(&variances).unwrap_or((f64::NAN, f64::NAN));

    let mut boot_rng = rng::rng_for(seed, &[rng::stream::GRAD_STUDY, u64::MAX]);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_REPLICATES);
    for _ in 0..BOOTSTRAP_REPLICATES {
        let vars: Vec<f64> = grams
            .iter()
            .map(|gm| {
                let mut counts = vec![0.0; draws];
                for _ in 0..draws {
                    counts[boot_rng.random_range(0..draws)] += 1.0;
                }
                weighted_variance(gm, &counts, p)
            })
            .collect();
        if let Some((s, _)) = fit(&vars) {
            slopes.push(s);
        }
    }
    let slope_se = if slopes.len() >= 2 {
        let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
        (slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(GradStudyResult {
        grid: grid.to_vec(),
        variances,
        slope,
        intercept,
        slope_se,
        draws,
        num_points: n_total,
        num_params: p,
    })
}
