//! Text formats: point clouds, prediction files, logits and datasets.
//!
//! Point cloud file: first line `N F K` with `F` in {3, 6}, then `N` rows of
//! `F` reals followed by an integer label. Prediction files use the same
//! layout but allow the label `-1` for unknown points. Reals are written
//! with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{read_text, write_text, Error, Result};
use crate::types::{Matrix, PointCloud};

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Points, optional colors and raw (possibly unknown) labels of a file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCloud {
    pub xyz: Vec<[f64; 3]>,
    pub rgb: Option<Vec<[f64; 3]>>,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
}

fn parse_cloud_text(text: &str, path: &Path, allow_unknown: bool) -> Result<RawCloud> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header `N F K`"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err(path, hline, "header must be `N F K`"));
    }
    let n: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(path, hline, format!("invalid point count `{}`", fields[0])))?;
    let f: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(path, hline, format!("invalid feature count `{}`", fields[1])))?;
    let k: usize = fields[2]
        .parse()
        .map_err(|_| parse_err(path, hline, format!("invalid class count `{}`", fields[2])))?;
    if f != 3 && f != 6 {
        return Err(parse_err(path, hline, format!("F must be 3 or 6, got {f}")));
    }
    if n == 0 || k == 0 {
        return Err(parse_err(path, hline, "N and K must be positive"));
    }

    let mut xyz = Vec::with_capacity(n);
    let mut rgb = (f == 6).then(|| Vec::with_capacity(n));
    let mut labels = Vec::with_capacity(n);
    for (line_no, line) in lines {
        if xyz.len() == n {
            return Err(parse_err(path, line_no, format!("expected {n} rows, found more")));
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != f + 1 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} columns, got {}", f + 1, cols.len()),
            ));
        }
        let mut vals = [0.0; 6];
        for (j, c) in cols[..f].iter().enumerate() {
            let v: f64 = c
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("invalid real `{c}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite value `{c}`")));
            }
            vals[j] = v;
        }
        let label: i64 = cols[f]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid label `{}`", cols[f])))?;
        let label = match label {
            -1 if allow_unknown => None,
            l if l >= 0 && (l as usize) < k => Some(l as usize),
            l => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("label {l} out of range for K={k}"),
                ))
            }
        };
        xyz.push([vals[0], vals[1], vals[2]]);
        if let Some(rgb) = rgb.as_mut() {
            rgb.push([vals[3], vals[4], vals[5]]);
        }
        labels.push(label);
    }
    if xyz.len() != n {
        let last = text.lines().count().max(1);
        return Err(parse_err(
            path,
            last,
            format!("expected {n} rows, got {}", xyz.len()),
        ));
    }
    Ok(RawCloud {
        xyz,
        rgb,
        labels,
        num_classes: k,
    })
}

fn render_cloud(
    xyz: &[[f64; 3]],
    rgb: Option<&[[f64; 3]]>,
    labels: impl Iterator<Item = i64>,
    k: usize,
) -> String {
    let f = if rgb.is_some() { 6 } else { 3 };
    let mut s = String::with_capacity(xyz.len() * 80);
    let _ = writeln!(s, "{} {} {}", xyz.len(), f, k);
    for (i, label) in labels.enumerate() {
        let p = xyz[i];
        let _ = write!(s, "{} {} {}", fmt_real(p[0]), fmt_real(p[1]), fmt_real(p[2]));
        if let Some(rgb) = rgb {
            let c = rgb[i];
            let _ = write!(s, " {} {} {}", fmt_real(c[0]), fmt_real(c[1]), fmt_real(c[2]));
        }
        let _ = writeln!(s, " {label}");
    }
    s
}

pub fn parse_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let raw = parse_cloud_text(text, path, false)?;
    let labels = raw.labels.into_iter().map(|l| l.unwrap_or(0)).collect();
    PointCloud::new(raw.xyz, raw.rgb, labels, raw.num_classes)
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_cloud(&read_text(path)?, path)
}

pub fn cloud_to_string(cloud: &PointCloud) -> String {
    render_cloud(
        cloud.xyz(),
        cloud.rgb(),
        cloud.labels().iter().map(|&l| l as i64),
        cloud.num_classes(),
    )
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, cloud_to_string(cloud))?;
    Ok(())
}

/// Writes `cloud`'s points with predicted labels (`None` becomes `-1`).
pub fn save_prediction(
    cloud: &PointCloud,
    predicted: &[Option<usize>],
    path: impl AsRef<Path>,
) -> Result<()> {
    if predicted.len() != cloud.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} points",
            predicted.len(),
            cloud.len()
        )));
    }
    let text = render_cloud(
        cloud.xyz(),
        cloud.rgb(),
        predicted.iter().map(|l| l.map_or(-1, |v| v as i64)),
        cloud.num_classes(),
    );
    write_text(path, text)?;
    Ok(())
}

pub fn load_prediction(path: impl AsRef<Path>) -> Result<RawCloud> {
    let path = path.as_ref();
    parse_cloud_text(&read_text(path)?, path, true)
}

/// Logits file: header `N K`, then N rows of K reals.
pub fn logits_to_string(m: &Matrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", m.rows(), m.cols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn save_logits(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, logits_to_string(m))?;
    Ok(())
}

pub fn load_logits(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header `N K`"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, hline, "header must be `N K`"))?;
    let [n, k] = dims[..] else {
        return Err(parse_err(path, hline, "header must be `N K`"));
    };
    let mut data = Vec::with_capacity(n * k);
    let mut rows = 0;
    for (line_no, line) in lines {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, line_no, "invalid real"))?;
        if vals.len() != k {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {k} columns, got {}", vals.len()),
            ));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, line_no, "non-finite value"));
        }
        data.extend(vals);
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, hline, format!("expected {n} rows, got {rows}")));
    }
    Matrix::from_vec(n, k, data)
}

/// One cloud of a dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub category: String,
    pub cloud: PointCloud,
}

pub const MANIFEST: &str = "manifest.txt";

/// Writes every sample as `<name>.txt` plus a `manifest.txt` of
/// `<file> <category>` lines. Returns the manifest path.
pub fn save_dataset(dir: impl AsRef<Path>, samples: &[Sample]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for s in samples {
        let file = format!("{}.txt", s.name);
        save_cloud(&s.cloud, dir.join(&file))?;
        let _ = writeln!(manifest, "{} {}", file, s.category);
    }
    let path = dir.join(MANIFEST);
    write_text(&path, manifest)?;
    Ok(path)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = read_text(&manifest_path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let file = parts.next().unwrap_or_default();
        let category = parts.next().unwrap_or("default").to_string();
        if parts.next().is_some() {
            return Err(parse_err(&manifest_path, i + 1, "expected `<file> <category>`"));
        }
        let cloud = load_cloud(dir.join(file))?;
        let name = file.strip_suffix(".txt").unwrap_or(file).to_string();
        out.push(Sample {
            name,
            category,
            cloud,
        });
    }
    if out.is_empty() {
        return Err(Error::validation(format!(
            "dataset {} is empty",
            manifest_path.display()
        )));
    }
    Ok(out)
}
