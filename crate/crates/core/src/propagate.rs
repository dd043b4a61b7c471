//! Inference-time label propagation: `Z̃ = γ(γI + L)⁻¹Z`, solved column by
//! column without forming the inverse.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::AffinityGraph;
use crate::types::{Logits, Matrix};

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub refined: Logits,
    /// Row-wise argmax of `refined`, ties to the lowest class.
    pub predicted: Vec<usize>,
    /// `‖(γI + L)Z̃ − γZ‖_F / ‖γZ‖_F` for the system actually solved.
    pub residual: f64,
    /// Diagonal shift used instead of γ when the first solve was
    /// near-singular.
    pub ridge: Option<f64>,
}

/// Pivot ratio below which a dense factorization is treated as singular.
const SINGULAR_RATIO: f64 = 1e-13;

fn check(logits: &Logits, graph: &AffinityGraph, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::validation(format!("gamma must be positive, got {gamma}")));
    }
    if logits.rows() != graph.len() {
        return Err(Error::validation(format!(
            "logits have {} rows, graph has {} vertices",
            logits.rows(),
            graph.len()
        )));
    }
    Ok(())
}

fn relative_residual(graph: &AffinityGraph, shift: f64, gamma: f64, z: &Matrix, x: &Matrix) -> f64 {
    let mut ax = graph.laplacian().mul_dense(x);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, xv), zv) in ax.data_mut().iter_mut().zip(x.data()).zip(z.data()) {
        let r = *a + shift * xv - gamma * zv;
        num += r * r;
        den += (gamma * zv).powi(2);
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Conjugate gradient on `(γI + L)x = b` starting from `x`.
///
/// Stops once `‖r‖ ≤ tol·‖b‖·γ/λ_max`, where `λ_max ≤ γ + 2‖L‖∞`; since
/// `λ_min ≥ γ` for a PSD Laplacian, this bounds the relative error of `x`
/// by `tol`.
fn cg(
    graph: &AffinityGraph,
    gamma: f64,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    let l = graph.laplacian();
    let n = b.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        l.matvec(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += gamma * vi;
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    let target = tol * bnorm * gamma / (gamma + 2.0 * l.norm_inf());
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, a)| bi - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok(());
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= target {
        Ok(())
    } else {
        Err(Error::Solver(format!(
            "conjugate gradient did not reach tolerance in {max_iter} iterations (residual {:.3e})",
            rr.sqrt() / bnorm
        )))
    }
}

fn shifted_dense(graph: &AffinityGraph, shift: f64) -> DMatrix<f64> {
    let n = graph.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, j, v) in graph.laplacian().triplets() {
        a[(i, j)] += v;
    }
    for i in 0..n {
        a[(i, i)] += shift;
    }
    a
}

/// LU solve of `(shift·I + L)X = γZ`; `None` when the factorization is
/// numerically singular.
fn dense_solve(graph: &AffinityGraph, shift: f64, gamma: f64, z: &Matrix) -> Option<Matrix> {
    let (n, k) = z.shape();
    let lu = shifted_dense(graph, shift).lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if n > 0 && !(min > SINGULAR_RATIO * max) {
        return None;
    }
    let b = DMatrix::from_fn(n, k, |i, c| gamma * z[(i, c)]);
    let x = lu.solve(&b)?;
    Some(Matrix::from_fn(n, k, |i, c| x[(i, c)]))
}

/// Refines logits along the graph.
///
/// Uses conjugate gradient when `L` is symmetric with nonnegative weights
/// and a dense LU solve otherwise (must-not-link edges make `L` indefinite,
/// asymmetric k-NN graphs make it non-symmetric). A near-singular dense
/// system is retried once with `γ + 1e-8·‖L‖∞` on the diagonal.
pub fn propagate(logits: &Logits, graph: &AffinityGraph, gamma: f64, tol: f64) -> Result<PropagationResult> {
    check(logits, graph, gamma)?;
    if !(tol > 0.0) {
        return Err(Error::validation("propagation tolerance must be positive"));
    }
    let z = logits.matrix();
    let (n, k) = z.shape();
    let mut ridge = None;
    let refined = if graph.is_symmetric() && !graph.has_negative_weights() {
        let mut x = Matrix::zeros(n, k);
        let mut col = vec![0.0; n];
        for c in 0..k {
            let b: Vec<f64> = z.column(c).iter().map(|v| gamma * v).collect();
            col.copy_from_slice(&z.column(c));
            cg(graph, gamma, &b, &mut col, tol, 10 * n.max(1))?;
            x.set_column(c, &col);
        }
        x
    } else {
        match dense_solve(graph, gamma, gamma, z) {
            Some(x) => x,
            None => {
                let shifted = gamma + 1e-8 * graph.laplacian().norm_inf();
                log::warn!("propagation system is near-singular, retrying with diagonal {shifted:e}");
                ridge = Some(shifted);
                dense_solve(graph, shifted, gamma, z).ok_or_else(|| {
                    Error::Solver("propagation system is singular even after ridge".into())
                })?
            }
        }
    };
    let residual = relative_residual(graph, ridge.unwrap_or(gamma), gamma, z, &refined);
    let refined = Logits::new(refined)
        .map_err(|_| Error::Numeric("propagation produced non-finite logits".into()))?;
    Ok(PropagationResult {
        predicted: refined.predictions(),
        refined,
        residual,
        ridge,
    })
}

/// Reference solution through an explicit dense inverse. Meant for checking
/// [`propagate`] on small graphs.
pub fn propagate_dense_oracle(logits: &Logits, graph: &AffinityGraph, gamma: f64) -> Result<Logits> {
    check(logits, graph, gamma)?;
    let inv = shifted_dense(graph, gamma)
        .try_inverse()
        .ok_or_else(|| Error::Solver("propagation matrix is singular".into()))?;
    let z = logits.matrix();
    let zm = DMatrix::from_fn(z.rows(), z.cols(), |i, c| z[(i, c)]);
    let x = inv * zm * gamma;
    Logits::new(Matrix::from_fn(z.rows(), z.cols(), |i, c| x[(i, c)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseMatrix;

    fn two_point() -> AffinityGraph {
        AffinityGraph::from_weights(SparseMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap())
            .unwrap()
    }

    #[test]
    fn hand_two_point_case() {
        let z = Logits::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap()).unwrap();
        let r = propagate(&z, &two_point(), 1.0, 1e-8).unwrap();
        let want = [[2.0 / 3.0, 0.0], [1.0 / 3.0, 0.0]];
        for i in 0..2 {
            for c in 0..2 {
                assert!((r.refined[(i, c)] - want[i][c]).abs() < 1e-12);
            }
        }
        assert_eq!(r.predicted, vec![0, 0]);
        let o = propagate_dense_oracle(&z, &two_point(), 1.0).unwrap();
        for i in 0..2 {
            for c in 0..2 {
                assert!((o[(i, c)] - want[i][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_graph_is_identity() {
        let z = Logits::new(Matrix::from_rows(&[vec![0.2, -1.0], vec![3.0, 0.5]]).unwrap()).unwrap();
        let r = propagate(&z, &AffinityGraph::empty(2), 1.0, 1e-8).unwrap();
        assert_eq!(r.refined.matrix(), z.matrix());
        assert_eq!(r.ridge, None);
    }

    #[test]
    fn indefinite_singular_system_gets_ridge() {
        // Must-not-link edge of weight −1 with γ = 2: (2I + L) has eigenvalue 0.
        let w = SparseMatrix::from_triplets(2, &[(0, 1, -1.0), (1, 0, -1.0)]).unwrap();
        let g = AffinityGraph::from_weights(w).unwrap();
        let z = Logits::new(Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap()).unwrap();
        let r = propagate(&z, &g, 2.0, 1e-8).unwrap();
        assert!(r.ridge.is_some());
        assert!(r.refined.is_finite());
    }

    #[test]
    fn rejects_bad_gamma() {
        let z = Logits::new(Matrix::zeros(2, 1)).unwrap();
        assert!(propagate(&z, &two_point(), 0.0, 1e-8).unwrap_err().is_validation());
    }
}
