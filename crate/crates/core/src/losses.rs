//! Loss terms on per-point logits. Each returns its value together with the
//! gradient w.r.t. the logits it consumed; the encoder tape carries that
//! gradient into the parameters.

use crate::config::{Ablation, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::AffinityGraph;
use crate::types::{LabelMask, Logits, Matrix, OneHotLabels, SampleLevelLabel};

/// A scalar loss and `dL/dZ`.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Matrix,
}

/// A loss over two logit matrices with a gradient for each.
#[derive(Debug, Clone)]
pub struct PairLossValue {
    pub value: f64,
    pub grad_a: Matrix,
    pub grad_b: Matrix,
}

/// Per-term values of one evaluation of the combined objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub seg: f64,
    pub mil: f64,
    pub sia: f64,
    pub smo: f64,
    pub total: f64,
}

/// Weights of the auxiliary terms; the segmentation term always has weight 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mil: f64,
    pub sia: f64,
    pub smo: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        mil: 0.0,
        sia: 0.0,
        smo: 0.0,
    };

    /// Configured lambdas, zeroed for terms the ablation switches off.
    pub fn new(config: &TrainConfig, ablation: &Ablation) -> Self {
        let on = |flag: bool, w: f64| if flag { w } else { 0.0 };
        LossWeights {
            mil: on(ablation.mil, config.lambda_mil),
            sia: on(ablation.siamese, config.lambda_sia),
            smo: on(ablation.smooth, config.lambda_smo),
        }
    }
}

/// `seg + λ₁·mil + λ₂·sia + λ₃·smo`.
pub fn total_loss(seg: f64, mil: f64, sia: f64, smo: f64, weights: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        seg,
        mil,
        sia,
        smo,
        total: seg + weights.mil * mil + weights.sia * sia + weights.smo * smo,
    }
}

/// Row-wise softmax, shifted by the row max.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut p = z.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

fn check_rows(logits: &Logits, n: usize, what: &str) -> Result<()> {
    if logits.rows() != n {
        return Err(Error::validation(format!(
            "{what} has {n} rows, logits have {}",
            logits.rows()
        )));
    }
    Ok(())
}

/// Summed cross-entropy over masked points divided by `normalizer`.
///
/// The batch form of the segmentation loss: each sample calls this with the
/// total masked count of the batch so that the per-sample values add up.
/// A sample with an empty mask contributes zero.
pub fn seg_loss_normalized(
    logits: &Logits,
    onehot: &OneHotLabels,
    mask: &LabelMask,
    normalizer: f64,
) -> Result<LossValue> {
    let (n, k) = logits.shape();
    check_rows(logits, mask.len(), "mask")?;
    if onehot.matrix().shape() != (n, k) {
        return Err(Error::validation(format!(
            "one-hot labels are {:?}, logits are {:?}",
            onehot.matrix().shape(),
            (n, k)
        )));
    }
    if !(normalizer > 0.0) {
        return Err(Error::validation("segmentation loss normalizer must be positive"));
    }
    let mut grad = Matrix::zeros(n, k);
    let mut value = 0.0;
    for i in mask.indices() {
        let z = logits.row(i);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let y = onehot.class_of(i);
        value += lse - z[y];
        let g = grad.row_mut(i);
        for (c, gv) in g.iter_mut().enumerate() {
            *gv = (z[c] - lse).exp() / normalizer;
        }
        g[y] -= 1.0 / normalizer;
    }
    Ok(LossValue {
        value: value / normalizer,
        grad,
    })
}

/// Mean softmax cross-entropy over the masked points.
pub fn seg_loss(logits: &Logits, onehot: &OneHotLabels, mask: &LabelMask) -> Result<LossValue> {
    let c = mask.count();
    if c == 0 {
        return Err(Error::validation("segmentation loss needs at least one labelled point"));
    }
    seg_loss_normalized(logits, onehot, mask, c as f64)
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the first maximum in every column.
pub fn column_argmax(z: &Matrix) -> Vec<usize> {
    let mut best = z.row(0).to_vec();
    let mut arg = vec![0; z.cols()];
    for i in 1..z.rows() {
        for (c, v) in z.row(i).iter().enumerate() {
            if *v > best[c] {
                best[c] = *v;
                arg[c] = i;
            }
        }
    }
    arg
}

/// Sigmoid cross-entropy between the column-max logits and the sample-level
/// label, averaged over classes.
pub fn mil_loss(logits: &Logits, label: &SampleLevelLabel) -> Result<LossValue> {
    let (n, k) = logits.shape();
    if label.num_classes() != k {
        return Err(Error::validation(format!(
            "sample label has {} classes, logits have {k}",
            label.num_classes()
        )));
    }
    let arg = column_argmax(logits);
    let mut grad = Matrix::zeros(n, k);
    let mut value = 0.0;
    for (c, &i) in arg.iter().enumerate() {
        let zbar = logits[(i, c)];
        let y = if label.present()[c] { 1.0 } else { 0.0 };
        // −y·log σ(z) − (1−y)·log(1−σ(z)) = y·softplus(−z) + (1−y)·softplus(z)
        value += y * softplus(-zbar) + (1.0 - y) * softplus(zbar);
        grad[(i, c)] = (sigmoid(zbar) - y) / k as f64;
    }
    Ok(LossValue {
        value: value / k as f64,
        grad,
    })
}

/// Mean squared difference between the row-softmax of two logit matrices.
pub fn siamese_loss(a: &Logits, b: &Logits) -> Result<PairLossValue> {
    if a.shape() != b.shape() {
        return Err(Error::validation(format!(
            "siamese branches have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, k) = a.shape();
    let scale = 1.0 / (n * k) as f64;
    let p = softmax_rows(a);
    let q = softmax_rows(b);
    let diff = p.sub(&q);
    let value = diff.data().iter().map(|d| d * d).sum::<f64>() * scale;

    // Pull dL/dp = 2·scale·(p − q) back through each softmax.
    let back = |probs: &Matrix, sign: f64| {
        let mut g = Matrix::zeros(n, k);
        for i in 0..n {
            let pr = probs.row(i);
            let dp: Vec<f64> = diff.row(i).iter().map(|d| sign * 2.0 * scale * d).collect();
            let dot: f64 = dp.iter().zip(pr).map(|(x, y)| x * y).sum();
            for (c, gv) in g.row_mut(i).iter_mut().enumerate() {
                *gv = pr[c] * (dp[c] - dot);
            }
        }
        g
    };
    Ok(PairLossValue {
        value,
        grad_a: back(&p, 1.0),
        grad_b: back(&q, -1.0),
    })
}

/// Graph smoothness `(1/‖W‖₀)·Σ_ij w_ij‖z_i − z_j‖²` on raw logits.
pub fn smooth_loss(logits: &Logits, graph: &AffinityGraph) -> Result<LossValue> {
    let (n, k) = logits.shape();
    check_rows(logits, graph.len(), "graph")?;
    let mut grad = Matrix::zeros(n, k);
    let nnz = graph.nnz();
    if nnz == 0 {
        log::warn!("smoothness loss on a graph without edges is zero");
        return Ok(LossValue { value: 0.0, grad });
    }
    let inv = 1.0 / nnz as f64;
    let mut value = 0.0;
    let mut diff = vec![0.0; k];
    for (i, j, w) in graph.weights().triplets() {
        if w == 0.0 {
            continue;
        }
        for (c, d) in diff.iter_mut().enumerate() {
            *d = logits[(i, c)] - logits[(j, c)];
        }
        value += w * diff.iter().map(|d| d * d).sum::<f64>();
        for (c, d) in diff.iter().enumerate() {
            let g = 2.0 * w * inv * d;
            grad[(i, c)] += g;
            grad[(j, c)] -= g;
        }
    }
    Ok(LossValue {
        value: value * inv,
        grad,
    })
}
