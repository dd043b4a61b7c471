//! File formats, synthetic shape generation and weak-label sampling.

mod format;
mod masks;
mod synthetic;

pub use format::{
    cloud_to_string, load_cloud, load_dataset, load_logits, load_prediction, logits_to_string,
    parse_cloud, save_cloud, save_dataset, save_logits, save_prediction, RawCloud, Sample,
    MANIFEST,
};
pub use masks::{
    fraction_count, sample_mask, sample_masks, split_budget, BudgetSplit, MaskScheme,
};
pub use synthetic::{
    generate_samples, generate_shape, generate_synthetic, Cuboid, ShapeFamily, ShapeGeometry,
    SyntheticSpec,
};
