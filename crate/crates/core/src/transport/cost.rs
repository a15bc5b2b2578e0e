use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix};

use super::SinkhornSettings;

/// Finite, nonnegative `n x k` assignment costs with `n >= 1`, `k >= 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() < 1 || m.cols() < 2 {
            return Err(Error::Shape(format!(
                "cost matrix needs n >= 1 and k >= 2, got {:?}",
                m.shape()
            )));
        }
        if let Some(v) = m.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Invalid(format!("cost entry {v} is not finite and >= 0")));
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }
}

/// `c[i][j] = -log(max(p[i][j], prob_floor))`.
pub fn build_cost_matrix(p: &ProbMatrix, settings: &SinkhornSettings) -> Result<CostMatrix> {
    settings.validate()?;
    let floor = settings.prob_floor;
    // -log(1) is -0.0; the max keeps every entry a plain nonnegative zero.
    CostMatrix::new(p.matrix().map(|v| (-(v.max(floor)).ln()).max(0.0)))
}
