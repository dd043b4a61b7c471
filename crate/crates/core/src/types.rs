//! Value types shared by every stage of the pipeline.
//!
//! Everything here is immutable after construction. Class indices are
//! 0-based and all floating point state is `f64`.

use std::ops::{Deref, Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Index of the largest entry in each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            (&self.data, self.cols as isize, 1),
            (&other.data, other.cols as isize, 1),
            &mut out.data,
            0.0,
        );
        out
    }

    /// `selfᵀ · other`, accumulated into `acc` when given.
    pub fn t_matmul_into(&self, other: &Matrix, acc: &mut Matrix) {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        assert_eq!(acc.shape(), (self.cols, other.cols));
        gemm(
            self.cols,
            self.rows,
            other.cols,
            (&self.data, 1, self.cols as isize),
            (&other.data, other.cols as isize, 1),
            &mut acc.data,
            1.0,
        );
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            (&self.data, self.cols as isize, 1),
            (&other.data, 1, other.cols as isize),
            &mut out.data,
            0.0,
        );
        out
    }
}

/// `c = a·b + beta·c` over strided views `(data, row_stride, col_stride)`;
/// `c` is a row-major `m×n` buffer.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the strides describe views that lie inside the given slices,
    // which the shape assertions of the callers guarantee.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// A point cloud with per-point ground-truth part labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    xyz: Vec<[f64; 3]>,
    rgb: Option<Vec<[f64; 3]>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl PointCloud {
    pub fn new(
        xyz: Vec<[f64; 3]>,
        rgb: Option<Vec<[f64; 3]>>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if xyz.is_empty() {
            return Err(Error::validation("point cloud must contain at least one point"));
        }
        if num_classes == 0 {
            return Err(Error::validation("num_classes must be at least 1"));
        }
        if labels.len() != xyz.len() {
            return Err(Error::validation(format!(
                "{} labels for {} points",
                labels.len(),
                xyz.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::validation(format!(
                "label {} at index {} is out of range for K={}",
                labels[i], i, num_classes
            )));
        }
        if let Some(i) = xyz.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::validation(format!("non-finite coordinate at point {i}")));
        }
        if let Some(rgb) = &rgb {
            if rgb.len() != xyz.len() {
                return Err(Error::validation(format!(
                    "{} rgb rows for {} points",
                    rgb.len(),
                    xyz.len()
                )));
            }
            if let Some(i) = rgb.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(Error::validation(format!("non-finite color at point {i}")));
            }
        }
        Ok(PointCloud {
            xyz,
            rgb,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.xyz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xyz.is_empty()
    }

    pub fn xyz(&self) -> &[[f64; 3]] {
        &self.xyz
    }

    pub fn rgb(&self) -> Option<&[[f64; 3]]> {
        self.rgb.as_deref()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Feature width F: 3 for xyz only, 6 with rgb.
    pub fn num_features(&self) -> usize {
        if self.rgb.is_some() {
            6
        } else {
            3
        }
    }

    /// Same cloud with replaced coordinates.
    pub fn with_xyz(&self, xyz: Vec<[f64; 3]>) -> Result<Self> {
        PointCloud::new(xyz, self.rgb.clone(), self.labels.clone(), self.num_classes)
    }

    /// Sorted distinct labels present in the cloud.
    pub fn present_labels(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.num_classes).filter(|&k| seen[k]).collect()
    }
}

/// Row-wise one-hot encoding of labels.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLabels(Matrix);

impl OneHotLabels {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Class index of row `i`.
    pub fn class_of(&self, i: usize) -> usize {
        self.0.row(i).iter().position(|&v| v == 1.0).unwrap_or(0)
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<OneHotLabels> {
    if let Some(i) = labels.iter().position(|&l| l >= num_classes) {
        return Err(Error::validation(format!(
            "label {} at index {} is out of range for K={}",
            labels[i], i, num_classes
        )));
    }
    let mut m = Matrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        m[(i, l)] = 1.0;
    }
    Ok(OneHotLabels(m))
}

/// Binary per-point supervision mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    flags: Vec<bool>,
    count: usize,
}

impl LabelMask {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        let count = flags.iter().filter(|&&f| f).count();
        LabelMask { flags, count }
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut flags = vec![false; len];
        for &i in indices {
            if i >= len {
                return Err(Error::validation(format!(
                    "mask index {i} out of range for {len} points"
                )));
            }
            flags[i] = true;
        }
        Ok(Self::from_flags(flags))
    }

    pub fn full(len: usize) -> Self {
        Self::from_flags(vec![true; len])
    }

    pub fn empty(len: usize) -> Self {
        Self::from_flags(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// N×K per-point class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Matrix);

impl Logits {
    pub fn new(values: Matrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::Numeric("logits contain non-finite entries".into()));
        }
        Ok(Logits(values))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Predicted class per point (ties to the lowest index).
    pub fn predictions(&self) -> Vec<usize> {
        self.0.argmax_rows()
    }
}

impl Deref for Logits {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Which classes occur in a sample, without localization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleLevelLabel {
    present: Vec<bool>,
}

impl SampleLevelLabel {
    pub fn new(present: Vec<bool>) -> Result<Self> {
        if !present.iter().any(|&p| p) {
            return Err(Error::validation("sample-level label needs at least one class"));
        }
        Ok(SampleLevelLabel { present })
    }

    /// Max-pools the one-hot labels of the labelled points only. `None`
    /// when the mask is empty.
    pub fn from_mask(labels: &[usize], mask: &LabelMask, num_classes: usize) -> Option<Self> {
        let mut present = vec![false; num_classes];
        for i in mask.indices() {
            present[labels[i]] = true;
        }
        Self::new(present).ok()
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub fn num_classes(&self) -> usize {
        self.present.len()
    }
}
