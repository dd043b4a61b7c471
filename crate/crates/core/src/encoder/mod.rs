//! PointNet-style per-point encoder with hand-written reverse mode.
//!
//! Shared MLP `F → w₀ → … → w_last` with ReLU, max-pool of the last layer
//! into a global vector, concatenation of that vector to each point's
//! second-to-last feature, then a per-point head ending in `K` raw logits.
//! Coordinates are centred on the centroid and scaled by the largest radius
//! before entering the network; colours pass through unchanged.

mod params;
mod tape;

pub use params::{
    checkpoint_to_string, init_params, load_checkpoint, parse_checkpoint, save_checkpoint,
    sgd_step, Dense, EncoderParams,
};
pub use tape::Tape;

use crate::error::{Error, Result};
use crate::types::{Logits, Matrix, PointCloud};

/// Network input: standardized xyz, then rgb when present.
pub fn input_features(cloud: &PointCloud) -> Matrix {
    let n = cloud.len();
    let xyz = cloud.xyz();
    let mut centroid = [0.0; 3];
    for p in xyz {
        for d in 0..3 {
            centroid[d] += p[d];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);
    let radius = xyz
        .iter()
        .map(|p| (0..3).map(|d| (p[d] - centroid[d]).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let scale = if radius > 0.0 { 1.0 / radius } else { 1.0 };

    let f = cloud.num_features();
    let mut x = Matrix::zeros(n, f);
    for (i, p) in xyz.iter().enumerate() {
        let row = x.row_mut(i);
        for d in 0..3 {
            row[d] = (p[d] - centroid[d]) * scale;
        }
        if let Some(rgb) = cloud.rgb() {
            row[3..6].copy_from_slice(&rgb[i]);
        }
    }
    x
}

fn check_compatible(params: &EncoderParams, cloud: &PointCloud) -> Result<()> {
    if cloud.num_features() != params.in_features {
        return Err(Error::validation(format!(
            "cloud has {} features, encoder expects {}",
            cloud.num_features(),
            params.in_features
        )));
    }
    if cloud.num_classes() != params.num_classes {
        return Err(Error::validation(format!(
            "cloud has {} classes, encoder outputs {}",
            cloud.num_classes(),
            params.num_classes
        )));
    }
    Ok(())
}

/// Forward pass recording every step on `tape` for a later
/// [`Tape::backward`].
pub fn forward_recorded<'p>(
    params: &'p EncoderParams,
    cloud: &PointCloud,
    tape: &mut Tape<'p>,
) -> Result<Logits> {
    check_compatible(params, cloud)?;
    tape.reset(params);
    let m = params.num_encoder_layers();
    let mut h = tape.input(input_features(cloud));
    let mut local = h;
    for layer in 0..m {
        let z = tape.linear(h, layer);
        h = tape.relu(z);
        if layer + 2 == m {
            local = h;
        }
    }
    let global = tape.max_pool(h);
    let head = params.layers.len() - m;
    let mut out = tape.concat_linear(local, global, m);
    for layer in m + 1..m + head {
        let a = tape.relu(out);
        out = tape.linear(a, layer);
    }
    Logits::new(tape.value(out).clone())
        .map_err(|_| Error::Numeric("encoder produced non-finite logits".into()))
}

/// Forward pass without keeping intermediate values for the caller.
pub fn forward(params: &EncoderParams, cloud: &PointCloud) -> Result<Logits> {
    let mut tape = Tape::new();
    forward_recorded(params, cloud, &mut tape)
}

/// Parameter gradients of a scalar loss given `dL/dZ`.
pub fn backward(tape: &Tape<'_>, logits_grad: &Matrix) -> Result<EncoderParams> {
    tape.backward(logits_grad)
}
