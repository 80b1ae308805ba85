//! Row-major `f64` matrices and the three GEMM shapes a dense layer needs.

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    /// Stacks equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Columns `[start, start + len)` as a new matrix.
    pub fn columns(&self, start: usize, len: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, len);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + len]);
        }
        out
    }
}

/// `out = x * w^T + bias` where `w` is `out_dim x in_dim` row-major.
pub fn linear_forward(x: &Matrix, w: &[f64], bias: &[f64], out_dim: usize) -> Matrix {
    let (m, k, n) = (x.rows, x.cols, out_dim);
    debug_assert_eq!(w.len(), n * k);
    let mut out = Matrix::zeros(m, n);
    for r in 0..m {
        out.row_mut(r).copy_from_slice(bias);
    }
    if m == 0 || k == 0 || n == 0 {
        return out;
    }
    // SAFETY: all slices are sized m*k, n*k and m*n and the strides describe
    // them exactly.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0,
            x.data.as_ptr(), k as isize, 1,
            w.as_ptr(), 1, k as isize,
            1.0,
            out.data.as_mut_ptr(), n as isize, 1,
        );
    }
    out
}

/// Accumulates `dw += dy^T * x` (`dw` is `out_dim x in_dim`).
pub fn linear_weight_grad(dy: &Matrix, x: &Matrix, dw: &mut [f64]) {
    let (m, k, n) = (dy.cols, dy.rows, x.cols);
    debug_assert_eq!(dw.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    // SAFETY: dy is k x m, x is k x n, dw is m x n; strides match.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0,
            dy.data.as_ptr(), 1, m as isize,
            x.data.as_ptr(), n as isize, 1,
            1.0,
            dw.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `dx = dy * w` for `w` of shape `out_dim x in_dim`.
pub fn linear_input_grad(dy: &Matrix, w: &[f64], in_dim: usize) -> Matrix {
    let (m, k, n) = (dy.rows, dy.cols, in_dim);
    let mut dx = Matrix::zeros(m, n);
    if m == 0 || k == 0 || n == 0 {
        return dx;
    }
    // SAFETY: dy is m x k, w is k x n, dx is m x n.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0,
            dy.data.as_ptr(), k as isize, 1,
            w.as_ptr(), n as isize, 1,
            0.0,
            dx.data.as_mut_ptr(), n as isize, 1,
        );
    }
    dx
}
