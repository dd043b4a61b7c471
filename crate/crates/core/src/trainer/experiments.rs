//! Labelling-budget split study and label-amount sweep.

use std::fmt::Write as _;

use super::{evaluate, train, TrainSample};
use crate::config::{Ablation, TrainConfig};
use crate::data_io::{sample_masks, split_budget, BudgetSplit, MaskScheme, Sample};
use crate::error::{Error, Result};
use crate::types::PointCloud;

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub split: BudgetSplit,
    pub cat_avg: f64,
    pub samp_avg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub cat_avg: f64,
    pub samp_avg: f64,
}

/// Tolerance on `x·y` against the requested total budget.
const BUDGET_TOL: f64 = 1e-9;

/// One training run per split with identical seeds, each scored on `test`.
pub fn budget_experiment(
    train_set: &[Sample],
    test_set: &[Sample],
    total_budget: f64,
    splits: &[BudgetSplit],
    config: &TrainConfig,
    ablation: &Ablation,
) -> Result<Vec<BudgetRow>> {
    if let Some(s) = splits
        .iter()
        .find(|s| (s.budget() - total_budget).abs() > BUDGET_TOL)
    {
        return Err(Error::validation(format!(
            "split {s} spends {} but the budget is {total_budget}",
            s.budget()
        )));
    }
    let clouds: Vec<&PointCloud> = train_set.iter().map(|s| &s.cloud).collect();
    splits
        .iter()
        .map(|&split| {
            let masked = split_budget(&clouds, split, config.seed)?;
            let samples: Vec<TrainSample> = train_set
                .iter()
                .zip(masked)
                .map(|(s, (_, mask))| TrainSample::new(s, mask))
                .collect();
            let run = train(&samples, config, ablation)?;
            let eval = evaluate(&run.params, test_set, None, config, config.use_propagation)?;
            log::info!(
                "budget split {split}: cat_avg {:.4}",
                eval.summary.aggregate.cat_avg
            );
            Ok(BudgetRow {
                split,
                cat_avg: eval.summary.aggregate.cat_avg,
                samp_avg: eval.summary.aggregate.samp_avg,
            })
        })
        .collect()
}

/// Mask scheme for a labelled fraction; 1 means full supervision.
pub fn scheme_for_fraction(fraction: f64) -> MaskScheme {
    if fraction == 1.0 {
        MaskScheme::Full
    } else {
        MaskScheme::FractionUniform(fraction)
    }
}

/// Segmentation-loss-only training, without propagation, for every labelled
/// fraction.
pub fn label_amount_sweep(
    train_set: &[Sample],
    test_set: &[Sample],
    fractions: &[f64],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let clouds: Vec<&PointCloud> = train_set.iter().map(|s| &s.cloud).collect();
    fractions
        .iter()
        .map(|&fraction| {
            let scheme = scheme_for_fraction(fraction);
            scheme.validate()?;
            let masks = sample_masks(&clouds, scheme, config.seed)?;
            let samples: Vec<TrainSample> = train_set
                .iter()
                .zip(masks)
                .map(|(s, m)| TrainSample::new(s, m))
                .collect();
            let run = train(&samples, config, &Ablation::NONE)?;
            let eval = evaluate(&run.params, test_set, None, config, false)?;
            log::info!("fraction {fraction}: cat_avg {:.4}", eval.summary.aggregate.cat_avg);
            Ok(SweepRow {
                fraction,
                cat_avg: eval.summary.aggregate.cat_avg,
                samp_avg: eval.summary.aggregate.samp_avg,
            })
        })
        .collect()
}

pub fn budget_csv(rows: &[BudgetRow]) -> String {
    let mut s = String::from("sample_fraction,point_fraction,cat_avg,samp_avg\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.16e},{:.16e}",
            r.split.sample_fraction, r.split.point_fraction, r.cat_avg, r.samp_avg
        );
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("fraction,cat_avg,samp_avg\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.16e},{:.16e}", r.fraction, r.cat_avg, r.samp_avg);
    }
    s
}
