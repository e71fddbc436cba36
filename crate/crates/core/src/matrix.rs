//! Column-major dense matrix and small descriptive statistics helpers.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_columns(n_rows: usize, columns: Vec<Vec<f64>>) -> Self {
        let n_cols = columns.len();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for c in columns {
            assert_eq!(c.len(), n_rows, "column length mismatch");
            data.extend(c);
        }
        Self { n_rows, n_cols, data }
    }

    /// Build from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n_rows, n_cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n_cols, "ragged rows");
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n_rows + i] = v;
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows.len(), self.n_cols);
        for j in 0..self.n_cols {
            let src = self.col(j);
            for (dst, &r) in out.col_mut(j).iter_mut().zip(rows) {
                *dst = src[r];
            }
        }
        out
    }

    pub fn select_cols(&self, cols: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for &j in cols {
            data.extend_from_slice(self.col(j));
        }
        DenseMatrix {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            data,
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (n − 1 denominator). `NaN` for fewer than 2 values.
pub fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sample_sd(x: &[f64]) -> f64 {
    sample_variance(x).sqrt()
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
