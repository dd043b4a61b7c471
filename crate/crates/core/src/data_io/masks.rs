//! Weak-label samplers: which points carry ground truth during training.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{LabelMask, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskScheme {
    /// Exactly one labelled point per part present in the cloud.
    OnePerCategory,
    /// `max(1, round(p·N))` points drawn uniformly without replacement.
    FractionUniform(f64),
    Full,
}

impl MaskScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MaskScheme::FractionUniform(p) if !(p > 0.0 && p <= 1.0) => Err(Error::validation(
                format!("label fraction must lie in (0, 1], got {p}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MaskScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskScheme::OnePerCategory => f.write_str("1pt"),
            MaskScheme::FractionUniform(p) => write!(f, "{}%", p * 100.0),
            MaskScheme::Full => f.write_str("full"),
        }
    }
}

/// Accepts `1pt`, `full`, `10%` or a bare fraction such as `0.1`.
impl FromStr for MaskScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let scheme = match s.trim() {
            "1pt" => MaskScheme::OnePerCategory,
            "full" => MaskScheme::Full,
            pct if pct.ends_with('%') => {
                let v: f64 = pct[..pct.len() - 1]
                    .parse()
                    .map_err(|_| Error::validation(format!("invalid scheme `{s}`")))?;
                MaskScheme::FractionUniform(v / 100.0)
            }
            frac => MaskScheme::FractionUniform(
                frac.parse()
                    .map_err(|_| Error::validation(format!("invalid scheme `{s}`")))?,
            ),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

/// Labelled-point count used by `FractionUniform`.
pub fn fraction_count(p: f64, n: usize) -> usize {
    ((p * n as f64).round() as usize).clamp(1, n)
}

pub fn sample_mask(cloud: &PointCloud, scheme: MaskScheme, seed: u64) -> Result<LabelMask> {
    scheme.validate()?;
    let n = cloud.len();
    let mut rng = rng::rng_for(seed, &[rng::stream::MASK]);
    match scheme {
        MaskScheme::Full => Ok(LabelMask::full(n)),
        MaskScheme::FractionUniform(p) => {
            let chosen = index::sample(&mut rng, n, fraction_count(p, n)).into_vec();
            LabelMask::from_indices(n, &chosen)
        }
        MaskScheme::OnePerCategory => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); cloud.num_classes()];
            for (i, &l) in cloud.labels().iter().enumerate() {
                by_class[l].push(i);
            }
            let chosen: Vec<usize> = by_class
                .iter()
                .filter(|members| !members.is_empty())
                .map(|members| members[index::sample(&mut rng, members.len(), 1).index(0)])
                .collect();
            LabelMask::from_indices(n, &chosen)
        }
    }
}

/// Masks for a whole dataset; sample `i` uses a seed derived from `(seed, i)`.
pub fn sample_masks(clouds: &[&PointCloud], scheme: MaskScheme, seed: u64) -> Result<Vec<LabelMask>> {
    clouds
        .iter()
        .enumerate()
        .map(|(i, c)| sample_mask(c, scheme, rng::derive_seed(seed, &[i as u64])))
        .collect()
}

/// A fixed labelling budget split between samples and points per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit {
    pub sample_fraction: f64,
    pub point_fraction: f64,
}

impl BudgetSplit {
    pub fn new(sample_fraction: f64, point_fraction: f64) -> Result<Self> {
        for (name, v) in [("sample", sample_fraction), ("point", point_fraction)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::validation(format!(
                    "{name} fraction must lie in (0, 1], got {v}"
                )));
            }
        }
        Ok(BudgetSplit {
            sample_fraction,
            point_fraction,
        })
    }

    pub fn budget(&self) -> f64 {
        self.sample_fraction * self.point_fraction
    }
}

impl fmt::Display for BudgetSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.sample_fraction, self.point_fraction)
    }
}

/// Parses `x:y`.
impl FromStr for BudgetSplit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("invalid split `{s}`, expected `x:y`"));
        let (x, y) = s.split_once(':').ok_or_else(bad)?;
        BudgetSplit::new(
            x.trim().parse().map_err(|_| bad())?,
            y.trim().parse().map_err(|_| bad())?,
        )
    }
}

/// Gives `round(x·B)` randomly chosen clouds a `FractionUniform(y)` mask and
/// every other cloud an empty mask.
pub fn split_budget<'a>(
    dataset: &[&'a PointCloud],
    split: BudgetSplit,
    seed: u64,
) -> Result<Vec<(&'a PointCloud, LabelMask)>> {
    if dataset.is_empty() {
        return Err(Error::validation("budget split needs a non-empty dataset"));
    }
    let b = dataset.len();
    let labelled = (split.sample_fraction * b as f64).round() as usize;
    if labelled == 0 {
        return Err(Error::validation(format!(
            "sample fraction {} of {} clouds rounds to zero",
            split.sample_fraction, b
        )));
    }
    let mut rng = rng::rng_for(seed, &[rng::stream::BUDGET]);
    let mut chosen = vec![false; b];
    for i in index::sample(&mut rng, b, labelled.min(b)) {
        chosen[i] = true;
    }
    dataset
        .iter()
        .enumerate()
        .map(|(i, &cloud)| {
            let mask = if chosen[i] {
                sample_mask(
                    cloud,
                    MaskScheme::FractionUniform(split.point_fraction),
                    rng::derive_seed(seed, &[i as u64]),
                )?
            } else {
                LabelMask::empty(cloud.len())
            };
            Ok((cloud, mask))
        })
        .collect()
}
