//! Unsupervised baselines given the true number of parts: k-means on point
//! features and normalized-cut spectral clustering.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::AffinityGraph;
use crate::rng;
use crate::types::{Matrix, PointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub num_clusters: usize,
    /// Sum of squared distances to the assigned centroid after every
    /// assignment step (k-means only).
    pub objective_trace: Vec<f64>,
}

/// xyz followed by rgb when present.
pub fn cloud_features(cloud: &PointCloud) -> Matrix {
    let f = cloud.num_features();
    Matrix::from_fn(cloud.len(), f, |i, d| {
        if d < 3 {
            cloud.xyz()[i][d]
        } else {
            cloud.rgb().expect("rgb present when F = 6")[i][d - 3]
        }
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(x: &Matrix, k: usize, rng: &mut rng::Rng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a chosen centre
            Err(_) => rng.random_range(0..n),
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments no
/// longer change or after `max_iters` assignment steps. An empty cluster is
/// reseeded at the point farthest from its own centroid.
pub fn kmeans(features: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<Clustering> {
    let n = features.rows();
    if k == 0 || k > n {
        return Err(Error::validation(format!("cannot form {k} clusters from {n} points")));
    }
    let d = features.cols();
    let mut rng = rng::rng_for(seed, &[rng::stream::KMEANS]);
    let mut centroids = plus_plus_seeds(features, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        for i in 0..n {
            let (c, dist) = nearest(features.row(i), &centroids);
            objective += dist;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (s, v) in sums.row_mut(assignment[i]).iter_mut().zip(features.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| (i, sq_dist(features.row(i), centroids.row(assignment[i]))))
                    .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                let src = features.row(far).to_vec();
                centroids.row_mut(c).copy_from_slice(&src);
            }
        }
    }
    Ok(Clustering {
        assignment,
        num_clusters: k,
        objective_trace: trace,
    })
}

/// Eigenvalues (ascending) and eigenvectors (columns) of
/// `D^{-1/2} L D^{-1/2}` over the non-isolated vertices, listed in
/// `vertices`.
pub fn normalized_laplacian_eigen(graph: &AffinityGraph) -> (Vec<usize>, Vec<f64>, DMatrix<f64>) {
    let w = graph.weights();
    let n = graph.len();
    // symmetric part of W, so that asymmetric k-NN graphs are accepted
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in w.triplets() {
        dense[(i, j)] += 0.5 * v;
        dense[(j, i)] += 0.5 * v;
    }
    let degree: Vec<f64> = (0..n).map(|i| dense.row(i).sum()).collect();
    let vertices: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    let m = vertices.len();
    let lsym = DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (vertices[a], vertices[b]);
        let id = if a == b { 1.0 } else { 0.0 };
        id - dense[(i, j)] / (degree[i] * degree[j]).sqrt()
    });
    let eig = SymmetricEigen::new(lsym);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (vertices, values, vectors)
}

/// Rows of the first `k` eigenvectors, scaled to unit length (zero rows stay
/// zero).
pub fn spectral_embedding(vectors: &DMatrix<f64>, k: usize) -> Matrix {
    let m = vectors.nrows();
    let mut emb = Matrix::from_fn(m, k, |r, c| vectors[(r, c)]);
    for r in 0..m {
        let row = emb.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    emb
}

/// Normalized-cut spectral clustering on the graph's weights.
///
/// Isolated vertices have no spectral coordinates; they take the cluster
/// whose mean in `features` is nearest.
pub fn ncut(graph: &AffinityGraph, features: &Matrix, k: usize, seed: u64) -> Result<Clustering> {
    let n = graph.len();
    if features.rows() != n {
        return Err(Error::validation(format!(
            "{} feature rows for a graph of {n} vertices",
            features.rows()
        )));
    }
    if graph.has_negative_weights() {
        return Err(Error::validation("ncut needs nonnegative weights"));
    }
    if k == 0 || k > n {
        return Err(Error::validation(format!("cannot form {k} clusters from {n} points")));
    }
    let (vertices, _, vectors) = normalized_laplacian_eigen(graph);
    if vertices.len() < k {
        log::warn!("graph has fewer connected vertices than clusters; using k-means on features");
        return kmeans(features, k, seed, 300).map(|c| Clustering {
            objective_trace: Vec::new(),
            ..c
        });
    }
    let emb = spectral_embedding(&vectors, k);
    let inner = kmeans(&emb, k, seed, 300)?;
    let mut assignment = vec![usize::MAX; n];
    for (a, &v) in vertices.iter().enumerate() {
        assignment[v] = inner.assignment[a];
    }
    let isolated = n - vertices.len();
    if isolated > 0 {
        log::warn!("{isolated} isolated vertices assigned by nearest feature centroid");
        let mut sums = Matrix::zeros(k, features.cols());
        let mut counts = vec![0usize; k];
        for &v in &vertices {
            counts[assignment[v]] += 1;
            for (s, x) in sums.row_mut(assignment[v]).iter_mut().zip(features.row(v)) {
                *s += x;
            }
        }
        let occupied: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
        let means = Matrix::from_fn(occupied.len(), features.cols(), |r, d| {
            sums[(occupied[r], d)] / counts[occupied[r]] as f64
        });
        for i in 0..n {
            if assignment[i] == usize::MAX {
                assignment[i] = occupied[nearest(features.row(i), &means).0];
            }
        }
    }
    Ok(Clustering {
        assignment,
        num_clusters: k,
        objective_trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseMatrix;

    #[test]
    fn single_cluster_centroid_is_mean() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]]).unwrap();
        let c = kmeans(&x, 1, 0, 10).unwrap();
        assert_eq!(c.assignment, vec![0, 0, 0]);
        // objective at the mean (1, 1): 2 + 2 + 4
        assert!((c.objective_trace.last().unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let x = Matrix::zeros(2, 2);
        assert!(kmeans(&x, 3, 0, 10).unwrap_err().is_validation());
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let x = Matrix::zeros(5, 3);
        let c = kmeans(&x, 2, 4, 10).unwrap();
        assert!(c.assignment.iter().all(|&a| a < 2));
    }

    #[test]
    fn isolated_vertex_takes_nearest_centroid() {
        // two edges (0-1, 2-3) and an isolated vertex 4 near vertex 3
        let w = SparseMatrix::from_triplets(
            5,
            &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        let g = AffinityGraph::from_weights(w).unwrap();
        let f = Matrix::from_rows(&[
            vec![0.0],
            vec![0.1],
            vec![10.0],
            vec![10.1],
            vec![9.0],
        ])
        .unwrap();
        let c = ncut(&g, &f, 2, 1).unwrap();
        assert_eq!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.assignment[2], c.assignment[3]);
        assert_ne!(c.assignment[0], c.assignment[2]);
        assert_eq!(c.assignment[4], c.assignment[3]);
    }
}
