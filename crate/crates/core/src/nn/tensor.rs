//! Row-major dense matrices and the handful of kernels the network needs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} vs {} values", data.len());
        Self { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul {:?} x {:?}", self.shape(), rhs.shape());
        let mut out = Self::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "t_matmul {:?} x {:?}", self.shape(), rhs.shape());
        let mut out = Self::zeros(self.cols, rhs.cols);
        let n = rhs.cols;
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = rhs.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_t {:?} x {:?}", self.shape(), rhs.shape());
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..rhs.rows {
                let b_row = rhs.row(j);
                out.data[i * rhs.rows + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Adds the single row `bias` to every row.
    pub fn add_row(&self, bias: &Self) -> Self {
        assert_eq!((1, self.cols), bias.shape());
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        out
    }

    /// Multiplies every row elementwise by the single row `gain`.
    pub fn mul_row(&self, gain: &Self) -> Self {
        assert_eq!((1, self.cols), gain.shape());
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, g) in out.row_mut(r).iter_mut().zip(&gain.data) {
                *o *= g;
            }
        }
        out
    }

    /// Column sums as a single row.
    pub fn sum_rows(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, x) in out.data.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }

    pub fn repeat_rows(&self, rows: usize) -> Self {
        assert_eq!(self.rows, 1);
        let mut data = Vec::with_capacity(rows * self.cols);
        for _ in 0..rows {
            data.extend_from_slice(&self.data);
        }
        Self::from_vec(rows, self.cols, data)
    }

    pub fn gather_rows(&self, index: &[usize]) -> Self {
        let mut data = Vec::with_capacity(index.len() * self.cols);
        for &i in index {
            data.extend_from_slice(self.row(i));
        }
        Self::from_vec(index.len(), self.cols, data)
    }

    /// `out[index[i]] += self[i]` into a fresh `rows × cols` matrix.
    pub fn scatter_add_rows(&self, index: &[usize], rows: usize) -> Self {
        assert_eq!(index.len(), self.rows);
        let mut out = Self::zeros(rows, self.cols);
        for (i, &dst) in index.iter().enumerate() {
            let src = self.row(i);
            for (o, x) in out.row_mut(dst).iter_mut().zip(src) {
                *o += x;
            }
        }
        out
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.cols);
        let mut data = Vec::with_capacity(self.rows * len);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + len]);
        }
        Self::from_vec(self.rows, len, data)
    }

    pub fn concat_cols(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows);
        let mut data = Vec::with_capacity(self.len() + rhs.len());
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(rhs.row(r));
        }
        Self::from_vec(self.rows, self.cols + rhs.cols, data)
    }
}

/// Standardizes each contiguous block of `block` columns in every row.
/// Returns the normalized matrix and the per-(row, block) inverse std devs.
pub fn normalize_blocks(x: &Matrix, block: usize, eps: f64) -> (Matrix, Vec<f64>) {
    assert!(block > 0 && x.cols.is_multiple_of(block));
    let blocks = x.cols / block;
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows * blocks);
    for r in 0..x.rows {
        let row = out.row_mut(r);
        for chunk in row.chunks_mut(block) {
            let mean = chunk.iter().sum::<f64>() / block as f64;
            let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / block as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for v in chunk.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
    }
    (out, inv_std)
}

/// Backward pass of [`normalize_blocks`] given its output `y`.
pub fn normalize_blocks_backward(grad: &Matrix, y: &Matrix, inv_std: &[f64], block: usize) -> Matrix {
    let mut out = Matrix::zeros(grad.rows, grad.cols);
    let blocks = grad.cols / block;
    let nb = block as f64;
    for r in 0..grad.rows {
        let g_row = grad.row(r);
        let y_row = y.row(r);
        let o_row = out.row_mut(r);
        for b in 0..blocks {
            let s = b * block;
            let g = &g_row[s..s + block];
            let yy = &y_row[s..s + block];
            let mean_g = g.iter().sum::<f64>() / nb;
            let mean_gy = g.iter().zip(yy).map(|(a, b)| a * b).sum::<f64>() / nb;
            let inv = inv_std[r * blocks + b];
            for j in 0..block {
                o_row[s + j] = inv * (g[j] - mean_g - yy[j] * mean_gy);
            }
        }
    }
    out
}
