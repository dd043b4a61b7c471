//! Two-stage training loop, evaluation, and the experiment drivers built on
//! top of them.
//!
//! Stage 1 minimizes the masked segmentation loss alone. Stage 2 adds the
//! multi-instance, Siamese and smoothness terms enabled by the [`Ablation`].
//! Per-sample work inside a batch runs on the current rayon pool; gradients
//! are reduced in sample order, so results do not depend on the number of
//! threads.

mod experiments;
mod grad_study;
mod run_dir;

pub use experiments::{
    budget_csv, budget_experiment, label_amount_sweep, scheme_for_fraction, sweep_csv, BudgetRow,
    SweepRow,
};
pub use grad_study::{grad_study, per_point_gradients, GradStudyResult};
pub use run_dir::{losses_csv, write_run_dir, RUN_FILES};

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::augment::{apply_transform, sample_transform_with};
use crate::config::{Ablation, TrainConfig};
use crate::data_io::Sample;
use crate::encoder::{self, init_params, EncoderParams, Tape};
use crate::error::{Error, Result};
use crate::graph::{
    apply_link_constraints, drop_negative_edges, knn_weights, AffinityGraph, GraphParams,
};
use crate::losses::{
    mil_loss, seg_loss_normalized, siamese_loss, smooth_loss, total_loss, LossBreakdown,
    LossWeights,
};
use crate::metrics::{
    miou_with_policy, summarize, IoUReport, MetricsSummary,
};
use crate::propagate::propagate;
use crate::rng;
use crate::types::{one_hot, LabelMask, OneHotLabels, PointCloud, SampleLevelLabel};

/// A training cloud with its supervision mask.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub name: String,
    pub category: String,
    pub cloud: PointCloud,
    pub mask: LabelMask,
}

impl TrainSample {
    pub fn new(sample: &Sample, mask: LabelMask) -> Self {
        TrainSample {
            name: sample.name.clone(),
            category: sample.category.clone(),
            cloud: sample.cloud.clone(),
            mask,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub ablation: Ablation,
    /// One entry per epoch, stage 1 first.
    pub losses: Vec<LossBreakdown>,
    pub params: EncoderParams,
    pub evaluation: Option<Evaluation>,
    pub wall_time: Duration,
}

/// Graph parameters for a run's k-NN graphs.
pub fn graph_params(config: &TrainConfig) -> GraphParams {
    GraphParams {
        k: config.k,
        eta: config.eta,
        symmetrize: config.symmetrize,
        use_rgb: true,
    }
}

/// Smoothness graph: k-NN weights plus must-link edges between labelled
/// points of the same class. Pairs of different classes are disconnected,
/// or get weight -1 when `smooth_must_not_link` is set.
pub fn training_graph(sample: &TrainSample, config: &TrainConfig) -> Result<AffinityGraph> {
    let g = knn_weights(&sample.cloud, &graph_params(config))?;
    let g = apply_link_constraints(&g, &sample.mask, sample.cloud.labels())?;
    if config.smooth_must_not_link {
        Ok(g)
    } else {
        drop_negative_edges(&g)
    }
}

struct Prepared {
    onehot: OneHotLabels,
    sample_label: Option<SampleLevelLabel>,
    graph: Option<AffinityGraph>,
}

fn check_dataset(samples: &[TrainSample]) -> Result<(usize, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::validation("training set is empty"))?;
    let (f, k) = (first.cloud.num_features(), first.cloud.num_classes());
    for s in samples {
        if s.cloud.num_features() != f || s.cloud.num_classes() != k {
            return Err(Error::validation(format!(
                "sample {} has F={} K={}, expected F={f} K={k}",
                s.name,
                s.cloud.num_features(),
                s.cloud.num_classes()
            )));
        }
        if s.mask.len() != s.cloud.len() {
            return Err(Error::validation(format!(
                "mask of sample {} has {} flags for {} points",
                s.name,
                s.mask.len(),
                s.cloud.len()
            )));
        }
    }
    if samples.iter().all(|s| s.mask.count() == 0) {
        return Err(Error::validation("no training sample has a labelled point"));
    }
    Ok((f, k))
}

/// Gradient and loss terms of one sample within a batch.
struct SampleStep {
    grads: EncoderParams,
    seg: f64,
    mil: f64,
    sia: f64,
    smo: f64,
}

#[allow(clippy::too_many_arguments)]
fn sample_step(
    params: &EncoderParams,
    sample: &TrainSample,
    prep: &Prepared,
    index: usize,
    epoch: usize,
    stage2: bool,
    seg_normalizer: f64,
    batch_len: f64,
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<SampleStep> {
    let mut tape = Tape::new();
    let z = encoder::forward_recorded(params, &sample.cloud, &mut tape)?;
    let (mut seg, mut mil, mut sia, mut smo) = (0.0, 0.0, 0.0, 0.0);

    let mut dz = if sample.mask.count() > 0 {
        let l = seg_loss_normalized(&z, &prep.onehot, &sample.mask, seg_normalizer)?;
        seg = l.value;
        l.grad
    } else {
        crate::types::Matrix::zeros(z.rows(), z.cols())
    };

    let mut grads = None;
    if stage2 {
        if weights.mil != 0.0 {
            if let Some(label) = &prep.sample_label {
                let l = mil_loss(&z, label)?;
                mil = l.value / batch_len;
                let mut g = l.grad;
                g.scale(weights.mil / batch_len);
                dz.add_assign(&g);
            }
        }
        if weights.smo != 0.0 {
            if let Some(graph) = &prep.graph {
                let l = smooth_loss(&z, graph)?;
                smo = l.value / batch_len;
                let mut g = l.grad;
                g.scale(weights.smo / batch_len);
                dz.add_assign(&g);
            }
        }
        if weights.sia != 0.0 || config.seg_on_augmented {
            let mut aug_rng = rng::rng_for(
                config.seed,
                &[rng::stream::AUGMENT, epoch as u64, index as u64],
            );
            let t = sample_transform_with(&mut aug_rng);
            let aug = apply_transform(&sample.cloud, &t)?;
            let mut aug_tape = Tape::new();
            let za = encoder::forward_recorded(params, &aug, &mut aug_tape)?;
            let mut dza = crate::types::Matrix::zeros(za.rows(), za.cols());
            if weights.sia != 0.0 {
                let l = siamese_loss(&z, &za)?;
                sia = l.value / batch_len;
                let mut ga = l.grad_a;
                ga.scale(weights.sia / batch_len);
                dz.add_assign(&ga);
                let mut gb = l.grad_b;
                gb.scale(weights.sia / batch_len);
                dza.add_assign(&gb);
            }
            if config.seg_on_augmented && sample.mask.count() > 0 {
                let l = seg_loss_normalized(&za, &prep.onehot, &sample.mask, seg_normalizer)?;
                seg += l.value;
                dza.add_assign(&l.grad);
            }
            grads = Some(aug_tape.backward(&dza)?);
        }
    }
    let mut total = tape.backward(&dz)?;
    if let Some(g) = grads {
        total.axpy(1.0, &g);
    }
    Ok(SampleStep {
        grads: total,
        seg,
        mil,
        sia,
        smo,
    })
}

/// Runs both training stages from a fresh initialization.
pub fn train(samples: &[TrainSample], config: &TrainConfig, ablation: &Ablation) -> Result<RunRecord> {
    let start = Instant::now();
    config.validate()?;
    let (f, k) = check_dataset(samples)?;
    let mut params = init_params(config.seed, f, k, &config.encoder_widths, &config.decoder_widths)?;
    let weights = LossWeights::new(config, ablation);

    let needs_graph = config.epochs_stage2 > 0 && weights.smo != 0.0;
    let prepared: Vec<Prepared> = samples
        .par_iter()
        .map(|s| {
            Ok(Prepared {
                onehot: one_hot(s.cloud.labels(), k)?,
                sample_label: SampleLevelLabel::from_mask(s.cloud.labels(), &s.mask, k),
                graph: if needs_graph {
                    Some(training_graph(s, config)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<_>>()?;

    let mut history = Vec::with_capacity(config.total_epochs());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.total_epochs() {
        let stage2 = epoch >= config.epochs_stage1;
        order.sort_unstable();
        order.shuffle(&mut rng::rng_for(config.seed, &[rng::stream::SHUFFLE, epoch as u64]));
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let labelled: usize = batch.iter().map(|&i| samples[i].mask.count()).sum();
            // a batch without labelled points still carries the auxiliary terms
            let seg_normalizer = labelled.max(1) as f64;
            let batch_len = batch.len() as f64;
            let steps: Vec<SampleStep> = batch
                .par_iter()
                .map(|&i| {
                    sample_step(
                        &params,
                        &samples[i],
                        &prepared[i],
                        i,
                        epoch,
                        stage2,
                        seg_normalizer,
                        batch_len,
                        &weights,
                        config,
                    )
                    .map_err(|e| match e {
                        Error::Numeric(msg) => Error::Numeric(format!(
                            "{msg} at epoch {epoch} on sample {}",
                            samples[i].name
                        )),
                        other => other,
                    })
                })
                .collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            let (mut seg, mut mil, mut sia, mut smo) = (0.0, 0.0, 0.0, 0.0);
            for s in &steps {
                grads.axpy(1.0, &s.grads);
                seg += s.seg;
                mil += s.mil;
                sia += s.sia;
                smo += s.smo;
            }
            let b = if stage2 {
                total_loss(seg, mil, sia, smo, &weights)
            } else {
                total_loss(seg, 0.0, 0.0, 0.0, &LossWeights::ZERO)
            };
            if !b.total.is_finite() || !grads.is_finite() {
                let names: Vec<&str> = batch.iter().map(|&i| samples[i].name.as_str()).collect();
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch} in batch [{}]",
                    names.join(", ")
                )));
            }
            params.axpy(-config.lr, &grads);
            for (acc, v) in sums.iter_mut().zip([b.seg, b.mil, b.sia, b.smo, b.total]) {
                *acc += v;
            }
            batches += 1;
        }
        let m = batches as f64;
        let rec = LossBreakdown {
            seg: sums[0] / m,
            mil: sums[1] / m,
            sia: sums[2] / m,
            smo: sums[3] / m,
            total: sums[4] / m,
        };
        log::debug!("epoch {epoch}: {rec:?}");
        history.push(rec);
    }
    Ok(RunRecord {
        config: config.clone(),
        ablation: *ablation,
        losses: history,
        params,
        evaluation: None,
        wall_time: start.elapsed(),
    })
}

/// Predictions and scores on an evaluation set.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub reports: Vec<(String, IoUReport)>,
    pub predictions: Vec<Vec<usize>>,
    pub summary: MetricsSummary,
}

/// Forward pass, optional label propagation on the unconstrained k-NN
/// graph (constrained by `masks` when `config.constrained_propagation`),
/// argmax and mIoU per sample.
pub fn evaluate(
    params: &EncoderParams,
    samples: &[Sample],
    masks: Option<&[LabelMask]>,
    config: &TrainConfig,
    use_propagation: bool,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::validation("evaluation set is empty"));
    }
    if let Some(m) = masks {
        if m.len() != samples.len() {
            return Err(Error::validation("one mask per evaluation sample required"));
        }
    }
    let results: Vec<(IoUReport, Vec<usize>)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let z = encoder::forward(params, &s.cloud)?;
            let pred = if use_propagation {
                let mut g = knn_weights(&s.cloud, &graph_params(config))?;
                if config.constrained_propagation {
                    if let Some(m) = masks {
                        g = apply_link_constraints(&g, &m[i], s.cloud.labels())?;
                    }
                }
                propagate(&z, &g, config.gamma, config.propagation_tol)?.predicted
            } else {
                z.predictions()
            };
            let report = miou_with_policy(
                &pred,
                s.cloud.labels(),
                s.cloud.num_classes(),
                config.absent_class_policy,
            )?;
            Ok((report, pred))
        })
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = samples.iter().map(|s| s.cloud.len()).collect();
    let mut reports = Vec::with_capacity(samples.len());
    let mut predictions = Vec::with_capacity(samples.len());
    for (s, (r, p)) in samples.iter().zip(results) {
        reports.push((s.category.clone(), r));
        predictions.push(p);
    }
    let summary = summarize(&reports, &sizes)?;
    Ok(Evaluation {
        reports,
        predictions,
        summary,
    })
}
