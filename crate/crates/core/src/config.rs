//! Training hyperparameters and the flat `key = value` settings format.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::AbsentClassPolicy;

/// All hyperparameters of a training run. The seed determines every random
/// draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Neighbors per point in the affinity graph.
    pub k: usize,
    /// Graph kernel bandwidth.
    pub eta: f64,
    /// Propagation fidelity weight.
    pub gamma: f64,
    pub lambda_mil: f64,
    pub lambda_sia: f64,
    pub lambda_smo: f64,
    pub lr: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Shared per-point MLP widths; the second-to-last layer is the local
    /// feature, the last one is max-pooled into the global feature.
    pub encoder_widths: Vec<usize>,
    /// Hidden widths of the per-point head before the K-way output.
    pub decoder_widths: Vec<usize>,
    /// Also apply the segmentation loss to the augmented branch.
    pub seg_on_augmented: bool,
    /// Max-symmetrize the k-NN weights.
    pub symmetrize: bool,
    /// Keep the -1 must-not-link edges in the training smoothness graph.
    /// Off by default: a negative weight makes the smoothness term
    /// unbounded below on raw logits.
    pub smooth_must_not_link: bool,
    /// Refine predictions by label propagation at evaluation time.
    pub use_propagation: bool,
    /// Add must-link/must-not-link edges to inference graphs (transductive).
    pub constrained_propagation: bool,
    pub propagation_tol: f64,
    pub absent_class_policy: AbsentClassPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 10,
            eta: 1e3,
            gamma: 1.0,
            lambda_mil: 1.0,
            lambda_sia: 1.0,
            lambda_smo: 1.0,
            lr: 1e-3,
            epochs_stage1: 60,
            epochs_stage2: 60,
            batch_size: 8,
            seed: 0,
            encoder_widths: vec![64, 64, 128],
            decoder_widths: vec![128],
            seg_on_augmented: false,
            symmetrize: true,
            smooth_must_not_link: false,
            use_propagation: true,
            constrained_propagation: false,
            propagation_tol: 1e-8,
            absent_class_policy: AbsentClassPolicy::Exclude,
        }
    }
}

/// Which auxiliary losses are enabled in stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    pub mil: bool,
    pub siamese: bool,
    pub smooth: bool,
}

impl Ablation {
    pub const ALL: Ablation = Ablation {
        mil: true,
        siamese: true,
        smooth: true,
    };
    pub const NONE: Ablation = Ablation {
        mil: false,
        siamese: false,
        smooth: false,
    };

    pub fn any(&self) -> bool {
        self.mil || self.siamese || self.smooth
    }
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::ALL
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("propagation_tol", self.propagation_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("lambda_mil", self.lambda_mil),
            ("lambda_sia", self.lambda_sia),
            ("lambda_smo", self.lambda_smo),
            ("lr", self.lr),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if self.encoder_widths.len() < 2 {
            return Err(Error::validation(
                "encoder_widths needs at least a local and a global layer",
            ));
        }
        if self
            .encoder_widths
            .iter()
            .chain(&self.decoder_widths)
            .any(|&w| w == 0)
        {
            return Err(Error::validation("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_stage1 + self.epochs_stage2
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_widths(w: &[usize]) -> String {
    w.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Serializes config and ablation flags as `key = value` lines.
pub fn write_settings(config: &TrainConfig, ablation: &Ablation) -> String {
    let mut s = String::new();
    let c = config;
    let _ = writeln!(s, "k = {}", c.k);
    let _ = writeln!(s, "eta = {}", fmt_f64(c.eta));
    let _ = writeln!(s, "gamma = {}", fmt_f64(c.gamma));
    let _ = writeln!(s, "lambda_mil = {}", fmt_f64(c.lambda_mil));
    let _ = writeln!(s, "lambda_sia = {}", fmt_f64(c.lambda_sia));
    let _ = writeln!(s, "lambda_smo = {}", fmt_f64(c.lambda_smo));
    let _ = writeln!(s, "lr = {}", fmt_f64(c.lr));
    let _ = writeln!(s, "epochs_stage1 = {}", c.epochs_stage1);
    let _ = writeln!(s, "epochs_stage2 = {}", c.epochs_stage2);
    let _ = writeln!(s, "batch_size = {}", c.batch_size);
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "encoder_widths = {}", fmt_widths(&c.encoder_widths));
    let _ = writeln!(s, "decoder_widths = {}", fmt_widths(&c.decoder_widths));
    let _ = writeln!(s, "seg_on_augmented = {}", c.seg_on_augmented);
    let _ = writeln!(s, "symmetrize = {}", c.symmetrize);
    let _ = writeln!(s, "smooth_must_not_link = {}", c.smooth_must_not_link);
    let _ = writeln!(s, "use_propagation = {}", c.use_propagation);
    let _ = writeln!(s, "constrained_propagation = {}", c.constrained_propagation);
    let _ = writeln!(s, "propagation_tol = {}", fmt_f64(c.propagation_tol));
    let _ = writeln!(s, "absent_class_policy = {}", c.absent_class_policy);
    let _ = writeln!(s, "mil = {}", ablation.mil);
    let _ = writeln!(s, "siamese = {}", ablation.siamese);
    let _ = writeln!(s, "smooth = {}", ablation.smooth);
    s
}

/// Parses `key = value` lines on top of the defaults. Blank lines and `#`
/// comments are ignored; unknown keys are rejected.
pub fn parse_settings(text: &str, path: &Path) -> Result<(TrainConfig, Ablation)> {
    let mut c = TrainConfig::default();
    let mut a = Ablation::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse::<T>().map_err(|_| format!("invalid value `{v}`"))
        }
        fn widths(v: &str) -> std::result::Result<Vec<usize>, String> {
            v.split(',').map(|w| parse::<usize>(w.trim())).collect()
        }
        let r: std::result::Result<(), String> = (|| {
            match key {
                "k" => c.k = parse(value)?,
                "eta" => c.eta = parse(value)?,
                "gamma" => c.gamma = parse(value)?,
                "lambda_mil" => c.lambda_mil = parse(value)?,
                "lambda_sia" => c.lambda_sia = parse(value)?,
                "lambda_smo" => c.lambda_smo = parse(value)?,
                "lr" => c.lr = parse(value)?,
                "epochs_stage1" => c.epochs_stage1 = parse(value)?,
                "epochs_stage2" => c.epochs_stage2 = parse(value)?,
                "batch_size" => c.batch_size = parse(value)?,
                "seed" => c.seed = parse(value)?,
                "encoder_widths" => c.encoder_widths = widths(value)?,
                "decoder_widths" => c.decoder_widths = widths(value)?,
                "seg_on_augmented" => c.seg_on_augmented = parse(value)?,
                "symmetrize" => c.symmetrize = parse(value)?,
                "smooth_must_not_link" => c.smooth_must_not_link = parse(value)?,
                "use_propagation" => c.use_propagation = parse(value)?,
                "constrained_propagation" => c.constrained_propagation = parse(value)?,
                "propagation_tol" => c.propagation_tol = parse(value)?,
                "absent_class_policy" => c.absent_class_policy = parse(value)?,
                "mil" => a.mil = parse(value)?,
                "siamese" => a.siamese = parse(value)?,
                "smooth" => a.smooth = parse(value)?,
                other => return Err(format!("unknown key `{other}`")),
            }
            Ok(())
        })();
        r.map_err(err)?;
    }
    c.validate()?;
    Ok((c, a))
}
