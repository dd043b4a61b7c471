//! Weakly supervised point-cloud part segmentation.
//!
//! A per-point encoder is trained from a handful of labelled points with a
//! masked cross-entropy, a multi-instance loss on column-max logits, a
//! rotation/mirror consistency loss and a k-NN graph smoothness term.
//! Predictions are refined at inference by closed-form label propagation.
//! Synthetic part-labelled shapes, k-means / normalized-cut baselines and
//! mIoU evaluation make the whole pipeline runnable on a laptop.

pub mod augment;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod data_io;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod propagate;
pub mod rng;
pub mod trainer;
pub mod types;

pub use config::{Ablation, TrainConfig};
pub use error::{Error, Result};
pub use types::{LabelMask, Logits, Matrix, OneHotLabels, PointCloud, SampleLevelLabel};
