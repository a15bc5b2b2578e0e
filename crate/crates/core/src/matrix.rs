//! Dense row-major matrices.

use crate::error::{Error, Result};

/// Dense `rows x cols` matrix of `f64`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.iter_rows().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        sums
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Frobenius inner product `sum_ij a_ij * b_ij`.
    pub fn dot(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "inner product of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A matrix whose rows are points of the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix(Matrix);

impl ProbMatrix {
    /// Tolerance on per-row sums accepted by [`ProbMatrix::new`].
    pub const SIMPLEX_TOL: f64 = 1e-6;

    pub fn new(m: Matrix) -> Result<Self> {
        Self::with_tolerance(m, Self::SIMPLEX_TOL)
    }

    pub fn with_tolerance(m: Matrix, tol: f64) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(Error::Shape(format!(
                "probability matrix must be non-empty, got {:?}",
                m.shape()
            )));
        }
        for (i, r) in m.iter_rows().enumerate() {
            if let Some(v) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Invalid(format!(
                    "row {i} has entry {v} outside [0, 1]"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Invalid(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self(m))
    }

    /// Rows are rescaled to sum to one; rows with no mass become uniform.
    pub fn normalized(mut m: Matrix) -> Result<Self> {
        let k = m.cols();
        for i in 0..m.rows() {
            let r = m.row_mut(i);
            if let Some(v) = r.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Invalid(format!("row {i} has entry {v}")));
            }
            let s: f64 = r.iter().sum();
            if s > 0.0 {
                r.iter_mut().for_each(|v| *v /= s);
            } else {
                r.iter_mut().for_each(|v| *v = 1.0 / k as f64);
            }
        }
        Self::new(m)
    }

    /// Row-wise softmax of a logit matrix.
    pub fn softmax(logits: &Matrix) -> Self {
        let mut out = logits.clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        Self(out)
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self(Matrix::filled(rows, cols, 1.0 / cols as f64))
    }

    pub fn one_hot(labels: &[usize], classes: usize) -> Result<Self> {
        let mut m = Matrix::zeros(labels.len(), classes);
        for (i, &c) in labels.iter().enumerate() {
            if c >= classes {
                return Err(Error::Invalid(format!("label {c} >= {classes}")));
            }
            m.set(i, c, 1.0);
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn argmax_rows(&self) -> Vec<usize> {
        self.0.iter_rows().map(argmax).collect()
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        Self(m)
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_rows() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(Matrix::from_rows(&rows).is_err());
    }

    #[test]
    fn sums_and_dot() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(m.row_sums(), vec![3.0, 7.0]);
        assert_eq!(m.col_sums(), vec![4.0, 6.0]);
        assert_eq!(m.dot(&m).unwrap(), 30.0);
    }

    #[test]
    fn prob_matrix_validation() {
        assert!(ProbMatrix::new(Matrix::from_rows(&[[0.5, 0.5]]).unwrap()).is_ok());
        assert!(ProbMatrix::new(Matrix::from_rows(&[[0.5, 0.6]]).unwrap()).is_err());
        assert!(ProbMatrix::new(Matrix::from_rows(&[[1.5, -0.5]]).unwrap()).is_err());
        let n = ProbMatrix::normalized(Matrix::from_rows(&[[0.0, 0.0], [1.0, 3.0]]).unwrap())
            .unwrap();
        assert_eq!(n.row(0), &[0.5, 0.5]);
        assert_eq!(n.row(1), &[0.25, 0.75]);
    }

    #[test]
    fn softmax_rows_are_simplex_points() {
        let logits = Matrix::from_rows(&[[1000.0, 0.0, -1000.0], [0.1, 0.2, 0.3]]).unwrap();
        let p = ProbMatrix::softmax(&logits);
        for r in p.matrix().iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(p.argmax_rows(), vec![0, 2]);
    }
}
