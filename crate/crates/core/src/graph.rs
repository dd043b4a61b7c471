//! Spatial/color k-NN affinity graphs and their Laplacians.
//!
//! Weights are `exp(-d/eta)` over the k nearest neighbors of each point
//! (Euclidean, not squared, distance). When colors are present the xyz and
//! rgb kernels are summed. The result is max-symmetrized by default and may
//! be overridden on labelled pairs by must-link (+1) / must-not-link (-1)
//! edges, in which case the Laplacian is no longer guaranteed PSD.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{LabelMask, Matrix, PointCloud};

/// Compressed sparse row matrix, square, with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists; columns must be unique
    /// within a row.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            debug_assert!(row.windows(2).all(|w| w[0].0 != w[1].0));
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::validation(format!("entry ({i},{j}) outside {n}x{n}")));
            }
            let row: &mut Vec<(usize, f64)> = &mut rows[i];
            match row.iter_mut().find(|(c, _)| *c == j) {
                Some(e) => e.1 = v,
                None => row.push((j, v)),
            }
        }
        Ok(Self::from_rows(rows))
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let rows = (0..m.rows())
            .map(|i| {
                m.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[a..b].binary_search(&j) {
            Ok(p) => self.values[a + p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `A · B` for a dense `B` with `n` rows.
    pub fn mul_dense(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.n, b.cols());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                for c in 0..b.cols() {
                    out[(i, c)] += v * b[(j, c)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut rows = vec![Vec::new(); self.n];
        for (i, j, v) in self.triplets() {
            rows[j].push((i, v));
        }
        Self::from_rows(rows)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Weight matrix W, degrees d and Laplacian L = D - W of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    weights: SparseMatrix,
    degrees: Vec<f64>,
    laplacian: SparseMatrix,
}

impl AffinityGraph {
    /// Wraps a weight matrix; the diagonal of `weights` must be empty.
    pub fn from_weights(weights: SparseMatrix) -> Result<Self> {
        let n = weights.dim();
        if let Some((i, _, _)) = weights.triplets().find(|(i, j, _)| i == j) {
            return Err(Error::validation(format!("self loop at vertex {i}")));
        }
        let degrees: Vec<f64> = (0..n).map(|i| weights.row(i).map(|(_, w)| w).sum()).collect();
        let rows = (0..n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = weights.row(i).map(|(j, w)| (j, -w)).collect();
                row.push((i, degrees[i]));
                row
            })
            .collect();
        Ok(AffinityGraph {
            laplacian: SparseMatrix::from_rows(rows),
            weights,
            degrees,
        })
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Self {
        Self::from_weights(SparseMatrix::from_rows(vec![Vec::new(); n]))
            .expect("empty graph has no self loops")
    }

    pub fn len(&self) -> usize {
        self.weights.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &SparseMatrix {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn laplacian(&self) -> &SparseMatrix {
        &self.laplacian
    }

    /// Number of stored nonzero weights, `||W||_0`.
    pub fn nnz(&self) -> usize {
        self.weights.values().iter().filter(|w| **w != 0.0).count()
    }

    pub fn has_negative_weights(&self) -> bool {
        self.weights.values().iter().any(|w| *w < 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.weights
            .triplets()
            .all(|(i, j, w)| self.weights.get(j, i) == w)
    }

    /// Debug dump: header `N nnz`, then one `i j w` line per stored weight.
    pub fn to_triplet_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.len(), self.weights.nnz());
        for (i, j, w) in self.weights.triplets() {
            let _ = writeln!(s, "{i} {j} {w:.16e}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Xyz,
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub k: usize,
    pub eta: f64,
    pub symmetrize: bool,
    /// Add the color kernel when the cloud has rgb.
    pub use_rgb: bool,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            k: 10,
            eta: 1e3,
            symmetrize: true,
            use_rgb: true,
        }
    }
}

fn channel_rows(cloud: &PointCloud, channel: Channel) -> Result<&[[f64; 3]]> {
    match channel {
        Channel::Xyz => Ok(cloud.xyz()),
        Channel::Rgb => cloud
            .rgb()
            .ok_or_else(|| Error::validation("rgb channel requested but the cloud has no colors")),
    }
}

#[inline]
fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Dense Euclidean distance matrix of one channel.
pub fn pairwise_distance(cloud: &PointCloud, channel: Channel) -> Result<Matrix> {
    let pts = channel_rows(cloud, channel)?;
    let n = pts.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(&pts[i], &pts[j]);
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    Ok(m)
}

/// Indices of the `k` nearest points to `i` (self excluded), ties to the
/// lower index, sorted by index.
fn nearest(pts: &[[f64; 3]], i: usize, k: usize, scratch: &mut Vec<(f64, usize)>) -> Vec<(usize, f64)> {
    scratch.clear();
    scratch.extend(
        pts.iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, p)| (dist(&pts[i], p), j)),
    );
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, by_dist);
        scratch.truncate(k);
    }
    let mut out: Vec<(usize, f64)> = scratch.iter().map(|&(d, j)| (j, d)).collect();
    out.sort_by_key(|&(j, _)| j);
    out
}

/// k-NN affinity graph of a cloud.
pub fn knn_weights(cloud: &PointCloud, params: &GraphParams) -> Result<AffinityGraph> {
    let n = cloud.len();
    if params.k == 0 || params.k >= n {
        return Err(Error::validation(format!(
            "k = {} must satisfy 1 <= k < N = {}",
            params.k, n
        )));
    }
    if !(params.eta > 0.0) {
        return Err(Error::validation(format!("eta must be positive, got {}", params.eta)));
    }
    let mut channels = vec![Channel::Xyz];
    if params.use_rgb && cloud.rgb().is_some() {
        channels.push(Channel::Rgb);
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut scratch = Vec::with_capacity(n);
    for channel in channels {
        let pts = channel_rows(cloud, channel)?;
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, d) in nearest(pts, i, params.k, &mut scratch) {
                let w = (-d / params.eta).exp();
                match row.iter_mut().find(|(c, _)| *c == j) {
                    Some(e) => e.1 += w,
                    None => row.push((j, w)),
                }
            }
        }
    }
    let mut weights = SparseMatrix::from_rows(rows);
    if params.symmetrize {
        weights = max_symmetrize(&weights);
    }
    AffinityGraph::from_weights(weights)
}

/// `max(W, Wᵀ)` elementwise.
fn max_symmetrize(w: &SparseMatrix) -> SparseMatrix {
    let n = w.dim();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| w.row(i).collect()).collect();
    for (i, j, v) in w.triplets() {
        let row = &mut rows[j];
        match row.iter_mut().find(|(c, _)| *c == i) {
            Some(e) => e.1 = e.1.max(v),
            None => row.push((i, v)),
        }
    }
    SparseMatrix::from_rows(rows)
}

/// Overwrites every labelled pair with +1 (same class) or -1 (different
/// class), symmetrically, and rebuilds degrees and Laplacian.
pub fn apply_link_constraints(
    graph: &AffinityGraph,
    mask: &LabelMask,
    labels: &[usize],
) -> Result<AffinityGraph> {
    let n = graph.len();
    if mask.len() != n || labels.len() != n {
        return Err(Error::validation(format!(
            "mask/labels of length {}/{} for a graph of {} vertices",
            mask.len(),
            labels.len(),
            n
        )));
    }
    let labelled = mask.indices();
    if labelled.len() < 2 {
        return Ok(graph.clone());
    }
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| graph.weights.row(i).collect()).collect();
    for &i in &labelled {
        let row = &mut rows[i];
        row.retain(|(j, _)| !mask.is_set(*j) || *j == i);
        for &j in &labelled {
            if j != i {
                row.push((j, if labels[i] == labels[j] { 1.0 } else { -1.0 }));
            }
        }
    }
    AffinityGraph::from_weights(SparseMatrix::from_rows(rows))
}

/// Removes every negative (must-not-link) edge.
pub fn drop_negative_edges(graph: &AffinityGraph) -> Result<AffinityGraph> {
    let rows = (0..graph.len())
        .map(|i| graph.weights.row(i).filter(|&(_, w)| w >= 0.0).collect())
        .collect();
    AffinityGraph::from_weights(SparseMatrix::from_rows(rows))
}
