//! Per-sample mIoU, best-permutation matching for unsupervised labels, and
//! the category/sample averages.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde_json::json;

use crate::error::{Error, Result};

/// How a class missing from both prediction and ground truth is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbsentClassPolicy {
    /// Left out of the sample mean.
    #[default]
    Exclude,
    /// Counted with IoU 1.
    ScoreOne,
}

impl fmt::Display for AbsentClassPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbsentClassPolicy::Exclude => "exclude",
            AbsentClassPolicy::ScoreOne => "score_one",
        })
    }
}

impl FromStr for AbsentClassPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(AbsentClassPolicy::Exclude),
            "score_one" => Ok(AbsentClassPolicy::ScoreOne),
            _ => Err(Error::validation(format!(
                "absent class policy must be `exclude` or `score_one`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoUReport {
    /// IoU per ground-truth class; `None` when the class is absent from both
    /// sides and excluded.
    pub per_class: Vec<Option<f64>>,
    pub sample_miou: f64,
    /// For matched reports, `permutation[k]` is the predicted label mapped
    /// onto ground-truth class `k`.
    pub permutation: Option<Vec<usize>>,
    /// Fraction of points whose (mapped) prediction equals the ground truth.
    pub accuracy: f64,
}

fn check_labels(pred: &[usize], gt: &[usize], k: usize) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::validation(format!(
            "prediction has {} points, ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("cannot score an empty prediction"));
    }
    if let Some(i) = pred.iter().chain(gt).position(|&l| l >= k) {
        let i = i % pred.len();
        return Err(Error::validation(format!("label at index {i} is not below {k}")));
    }
    Ok(())
}

/// `counts[a][b]` = number of points with prediction `a` and truth `b`.
fn confusion(pred: &[usize], gt: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; k]; k];
    for (&p, &g) in pred.iter().zip(gt) {
        m[p][g] += 1;
    }
    m
}

/// IoU between prediction label `a` and ground-truth label `b`, or `None`
/// when both sets are empty.
fn pair_iou(conf: &[Vec<usize>], pred_count: &[usize], gt_count: &[usize], a: usize, b: usize) -> Option<f64> {
    let inter = conf[a][b];
    let union = pred_count[a] + gt_count[b] - inter;
    (union > 0).then(|| inter as f64 / union as f64)
}

fn report_from_confusion(
    conf: &[Vec<usize>],
    perm: &[usize],
    policy: AbsentClassPolicy,
    n: usize,
) -> IoUReport {
    let k = conf.len();
    let pred_count: Vec<usize> = conf.iter().map(|r| r.iter().sum()).collect();
    let gt_count: Vec<usize> = (0..k).map(|b| conf.iter().map(|r| r[b]).sum()).collect();
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|b| {
            pair_iou(conf, &pred_count, &gt_count, perm[b], b).or(match policy {
                AbsentClassPolicy::Exclude => None,
                AbsentClassPolicy::ScoreOne => Some(1.0),
            })
        })
        .collect();
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    let sample_miou = scored.iter().sum::<f64>() / scored.len() as f64;
    let correct: usize = (0..k).map(|b| conf[perm[b]][b]).sum();
    IoUReport {
        per_class,
        sample_miou,
        permutation: None,
        accuracy: correct as f64 / n as f64,
    }
}

/// Per-class IoU and its mean under the given absent-class policy.
pub fn miou_with_policy(pred: &[usize], gt: &[usize], k: usize, policy: AbsentClassPolicy) -> Result<IoUReport> {
    check_labels(pred, gt, k)?;
    let conf = confusion(pred, gt, k);
    let identity: Vec<usize> = (0..k).collect();
    Ok(report_from_confusion(&conf, &identity, policy, pred.len()))
}

/// [`miou_with_policy`] with absent classes excluded.
pub fn miou(pred: &[usize], gt: &[usize], k: usize) -> Result<IoUReport> {
    miou_with_policy(pred, gt, k, AbsentClassPolicy::Exclude)
}

/// Minimum-cost perfect assignment on a square matrix: `result[row]` is the
/// chosen column. Shortest augmenting paths with potentials, O(n³).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for col in 1..=n {
        result[owner[col] - 1] = col - 1;
    }
    result
}

/// Bonus on the diagonal that makes the identity win exact ties without
/// changing any strict preference.
const IDENTITY_BONUS: f64 = 1e-12;

/// Relabels predictions by the permutation maximizing the summed IoU
/// `Σ_k IoU(π(k), k)` and reports mIoU under it. A pair of empty sets counts
/// as IoU 1 in the matching objective.
pub fn best_permutation_miou_with_policy(
    pred: &[usize],
    gt: &[usize],
    k: usize,
    policy: AbsentClassPolicy,
) -> Result<IoUReport> {
    check_labels(pred, gt, k)?;
    let conf = confusion(pred, gt, k);
    let pred_count: Vec<usize> = conf.iter().map(|r| r.iter().sum()).collect();
    let gt_count: Vec<usize> = (0..k).map(|b| conf.iter().map(|r| r[b]).sum()).collect();
    // rows: ground-truth classes, columns: predicted labels
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|b| {
            (0..k)
                .map(|a| {
                    let iou = pair_iou(&conf, &pred_count, &gt_count, a, b).unwrap_or(1.0);
                    let bonus = if a == b { IDENTITY_BONUS } else { 0.0 };
                    -(iou + bonus)
                })
                .collect()
        })
        .collect();
    let perm = hungarian(&cost);
    let mut report = report_from_confusion(&conf, &perm, policy, pred.len());
    report.permutation = Some(perm);
    Ok(report)
}

/// [`best_permutation_miou_with_policy`] with absent classes excluded.
pub fn best_permutation_miou(pred: &[usize], gt: &[usize], k: usize) -> Result<IoUReport> {
    best_permutation_miou_with_policy(pred, gt, k, AbsentClassPolicy::Exclude)
}

/// Category and sample averages of per-sample mIoU.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub cat_avg: f64,
    pub samp_avg: f64,
    /// Mean sample mIoU per category, sorted by category name.
    pub per_category: Vec<(String, f64)>,
}

pub fn aggregate(reports: &[(String, IoUReport)]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::validation("no reports to aggregate"));
    }
    let mut by_cat: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for (cat, r) in reports {
        let e = by_cat.entry(cat.as_str()).or_insert((0.0, 0));
        e.0 += r.sample_miou;
        e.1 += 1;
        total += r.sample_miou;
    }
    let per_category: Vec<(String, f64)> = by_cat
        .into_iter()
        .map(|(c, (s, n))| (c.to_string(), s / n as f64))
        .collect();
    let cat_avg = per_category.iter().map(|(_, m)| m).sum::<f64>() / per_category.len() as f64;
    Ok(Aggregate {
        cat_avg,
        samp_avg: total / reports.len() as f64,
        per_category,
    })
}

/// Everything written to `metrics.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub aggregate: Aggregate,
    /// Mean IoU per class over the samples in which the class was scored.
    pub per_class: Vec<Option<f64>>,
    pub overall_accuracy: f64,
    pub num_samples: usize,
}

/// Aggregates reports and pools per-class and accuracy statistics.
/// `sizes[i]` is the point count behind `reports[i]`.
pub fn summarize(reports: &[(String, IoUReport)], sizes: &[usize]) -> Result<MetricsSummary> {
    let aggregate = aggregate(reports)?;
    if sizes.len() != reports.len() {
        return Err(Error::validation("one size per report required"));
    }
    let k = reports.iter().map(|(_, r)| r.per_class.len()).max().unwrap_or(0);
    let mut sums = vec![(0.0, 0usize); k];
    for (_, r) in reports {
        for (c, v) in r.per_class.iter().enumerate() {
            if let Some(v) = v {
                sums[c].0 += v;
                sums[c].1 += 1;
            }
        }
    }
    let per_class = sums
        .iter()
        .map(|&(s, n)| (n > 0).then(|| s / n as f64))
        .collect();
    let points: usize = sizes.iter().sum();
    let correct: f64 = reports
        .iter()
        .zip(sizes)
        .map(|((_, r), &n)| r.accuracy * n as f64)
        .sum();
    Ok(MetricsSummary {
        aggregate,
        per_class,
        overall_accuracy: correct / points as f64,
        num_samples: reports.len(),
    })
}

/// JSON text with keys `cat_avg`, `samp_avg`, `per_class`,
/// `overall_accuracy`, `per_category`, `num_samples`.
pub fn metrics_json(summary: &MetricsSummary) -> String {
    let per_category: serde_json::Map<String, serde_json::Value> = summary
        .aggregate
        .per_category
        .iter()
        .map(|(c, m)| (c.clone(), json!(m)))
        .collect();
    let value = json!({
        "cat_avg": summary.aggregate.cat_avg,
        "samp_avg": summary.aggregate.samp_avg,
        "per_class": summary.per_class,
        "overall_accuracy": summary.overall_accuracy,
        "per_category": per_category,
        "num_samples": summary.num_samples,
    });
    let mut s = serde_json::to_string_pretty(&value).expect("metrics serialize");
    s.push('\n');
    s
}
