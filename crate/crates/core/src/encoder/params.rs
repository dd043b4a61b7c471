use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::error::{read_text, write_text, Error, Result};
use crate::rng;
use crate::types::Matrix;

/// One fully connected layer, `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Encoder weights. The same type holds gradients.
///
/// Layers are stored in order: the shared point MLP (`encoder_widths`),
/// then the head, whose first layer takes the concatenation of the local
/// feature (second-to-last point MLP layer) and the pooled global feature.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub in_features: usize,
    pub num_classes: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub seed: u64,
    pub layers: Vec<Dense>,
}

impl EncoderParams {
    fn layer_shapes(
        in_features: usize,
        num_classes: usize,
        encoder_widths: &[usize],
        decoder_widths: &[usize],
    ) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = in_features;
        for &w in encoder_widths {
            shapes.push((prev, w));
            prev = w;
        }
        let m = encoder_widths.len();
        prev = encoder_widths[m - 2] + encoder_widths[m - 1];
        for &w in decoder_widths.iter().chain(std::iter::once(&num_classes)) {
            shapes.push((prev, w));
            prev = w;
        }
        shapes
    }

    /// All-zero parameters of the given architecture.
    pub fn zeros(
        in_features: usize,
        num_classes: usize,
        encoder_widths: &[usize],
        decoder_widths: &[usize],
    ) -> Result<Self> {
        if in_features != 3 && in_features != 6 {
            return Err(Error::validation(format!(
                "input features must be 3 or 6, got {in_features}"
            )));
        }
        if num_classes == 0 {
            return Err(Error::validation("num_classes must be positive"));
        }
        if encoder_widths.len() < 2 {
            return Err(Error::validation(
                "encoder needs at least a local and a global layer",
            ));
        }
        if encoder_widths.iter().chain(decoder_widths).any(|&w| w == 0) {
            return Err(Error::validation("layer widths must be positive"));
        }
        let layers = Self::layer_shapes(in_features, num_classes, encoder_widths, decoder_widths)
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(EncoderParams {
            in_features,
            num_classes,
            encoder_widths: encoder_widths.to_vec(),
            decoder_widths: decoder_widths.to_vec(),
            seed: 0,
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|v| *v = 0.0);
        z
    }

    pub fn num_encoder_layers(&self) -> usize {
        self.encoder_widths.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Visits every scalar in a fixed order: per layer, weights row-major,
    /// then biases.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.weight.data_mut().iter_mut().for_each(&mut f);
            l.bias.iter_mut().for_each(&mut f);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::validation(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut it = values.iter();
        self.for_each_mut(|v| *v = *it.next().expect("length checked"));
        Ok(())
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &EncoderParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += alpha * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += alpha * y;
            }
        }
    }

    pub fn same_shape(&self, other: &EncoderParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape() && a.bias.len() == b.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

/// Glorot-uniform weights, limit `sqrt(6 / (fan_in + fan_out))`, zero
/// biases.
pub fn init_params(
    seed: u64,
    in_features: usize,
    num_classes: usize,
    encoder_widths: &[usize],
    decoder_widths: &[usize],
) -> Result<EncoderParams> {
    let mut p = EncoderParams::zeros(in_features, num_classes, encoder_widths, decoder_widths)?;
    p.seed = seed;
    let mut rng = rng::rng_for(seed, &[rng::stream::INIT]);
    for l in &mut p.layers {
        let limit = (6.0 / (l.fan_in() + l.fan_out()) as f64).sqrt();
        for w in l.weight.data_mut() {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(p)
}

/// `θ ← θ − lr·g`.
pub fn sgd_step(params: &EncoderParams, grads: &EncoderParams, lr: f64) -> Result<EncoderParams> {
    if !params.same_shape(grads) {
        return Err(Error::validation("gradient shape does not match parameters"));
    }
    let mut out = params.clone();
    out.axpy(-lr, grads);
    Ok(out)
}

fn join(w: &[usize]) -> String {
    w.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn checkpoint_to_string(p: &EncoderParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "wsseg-checkpoint 1");
    let _ = writeln!(s, "in_features {}", p.in_features);
    let _ = writeln!(s, "num_classes {}", p.num_classes);
    let _ = writeln!(s, "encoder_widths {}", join(&p.encoder_widths));
    let _ = writeln!(s, "decoder_widths {}", join(&p.decoder_widths));
    let _ = writeln!(s, "seed {}", p.seed);
    let _ = writeln!(s, "params {}", p.num_params());
    for v in p.to_flat() {
        let _ = writeln!(s, "{v:.16e}");
    }
    s
}

pub fn save_checkpoint(p: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, checkpoint_to_string(p))?;
    Ok(())
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<EncoderParams> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let lines: Vec<&str> = text.lines().collect();
    let field = |idx: usize, key: &str| -> Result<Vec<&str>> {
        let line = lines.get(idx).ok_or_else(|| err(idx + 1, "truncated header"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(err(idx + 1, &format!("expected `{key}`")));
        }
        Ok(parts.collect())
    };
    let nums = |idx: usize, key: &str| -> Result<Vec<usize>> {
        field(idx, key)?
            .iter()
            .map(|t| t.parse().map_err(|_| err(idx + 1, "invalid integer")))
            .collect()
    };
    if field(0, "wsseg-checkpoint")? != ["1"] {
        return Err(err(1, "unsupported checkpoint version"));
    }
    let single = |idx: usize, key: &str| -> Result<usize> {
        match nums(idx, key)?[..] {
            [v] => Ok(v),
            _ => Err(err(idx + 1, "expected one value")),
        }
    };
    let in_features = single(1, "in_features")?;
    let num_classes = single(2, "num_classes")?;
    let encoder_widths = nums(3, "encoder_widths")?;
    let decoder_widths = nums(4, "decoder_widths")?;
    let seed: u64 = match field(5, "seed")?[..] {
        [s] => s.parse().map_err(|_| err(6, "invalid seed"))?,
        _ => return Err(err(6, "expected one value")),
    };
    let count = single(6, "params")?;
    let mut p = EncoderParams::zeros(in_features, num_classes, &encoder_widths, &decoder_widths)?;
    p.seed = seed;
    if count != p.num_params() {
        return Err(err(7, "parameter count does not match the architecture"));
    }
    let values: Vec<f64> = lines[7..]
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| err(i + 8, "invalid real"))
        })
        .collect::<Result<_>>()?;
    if values.len() != count {
        return Err(err(lines.len(), "wrong number of parameter values"));
    }
    p.set_flat(&values)?;
    Ok(p)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    parse_checkpoint(&read_text(path)?, path)
}
