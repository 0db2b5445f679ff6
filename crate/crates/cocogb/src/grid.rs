//! Dense row-major `f64` grid shared by the attention and loss-kernel modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix of `f64` values.
///
/// Serializes as a nested array of rows, the same shape attention records use
/// on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch("grid must be at least 1x1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "grid data has {} values, expected {}x{} = {}",
                data.len(),
                rows,
                cols,
                rows * cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest value; ties resolve to the smallest row-major index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0usize;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Elementwise map into a new grid of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same-shape scaling by a scalar factor.
    pub fn scaled(&self, factor: f64) -> Grid {
        self.map(|v| v * factor)
    }

    pub fn all_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    /// Rescale so the maximum value becomes 1. Errors when the grid has no
    /// positive mass.
    pub fn max_normalized(&self) -> Result<Grid> {
        let m = self.max();
        if m.is_nan() || m <= 0.0 {
            return Err(Error::ZeroAttention);
        }
        Ok(self.scaled(1.0 / m))
    }

    /// Rescale so the values sum to 1. Errors when the grid has no positive mass.
    pub fn sum_normalized(&self) -> Result<Grid> {
        let s = self.sum();
        if s.is_nan() || s <= 0.0 {
            return Err(Error::ZeroAttention);
        }
        Ok(self.scaled(1.0 / s))
    }
}

impl TryFrom<Vec<Vec<f64>>> for Grid {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::ShapeMismatch("grid must be at least 1x1".into()));
        }
        let cols = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch(format!(
                "ragged grid: row of length {} in a {}-column grid",
                bad.len(),
                cols
            )));
        }
        let n_rows = rows.len();
        Ok(Grid {
            rows: n_rows,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<Grid> for Vec<Vec<f64>> {
    fn from(g: Grid) -> Self {
        g.data.chunks(g.cols).map(<[f64]>::to_vec).collect()
    }
}
