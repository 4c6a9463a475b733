//! Small dense row-major matrices for group and algebra elements.
//!
//! Every matrix this crate handles on the group side is at most 3×3, so the
//! operations here favour clarity over blocking or SIMD.

use serde::{Deserialize, Serialize};

use super::LieError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Which matrix norm a caller wants when the choice matters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatrixNorm {
    /// Largest singular value, by power iteration on `AᵀA`.
    #[default]
    Spectral,
    Frobenius,
}

/// Power-iteration count used for spectral norms.
pub const POWER_ITERATIONS: usize = 50;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a row-major buffer.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), C, data)
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "elementwise shape mismatch"
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs).sub(&rhs.matmul(self))
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest singular value estimated by [`POWER_ITERATIONS`] steps of
    /// power iteration on `AᵀA`, restarted from every standard basis vector
    /// so no start can be orthogonal to the dominant direction for all runs.
    pub fn spectral_norm(&self) -> f64 {
        let ata = self.transpose().matmul(self);
        let n = ata.rows;
        let mut best: f64 = 0.0;
        for start in 0..n {
            let mut v = vec![0.0; n];
            v[start] = 1.0;
            let mut lambda = 0.0;
            for _ in 0..POWER_ITERATIONS {
                let w = ata.mul_vec(&v);
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    lambda = 0.0;
                    break;
                }
                lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                v = w.into_iter().map(|x| x / norm).collect();
            }
            let w = ata.mul_vec(&v);
            lambda = lambda.max(v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
            best = best.max(lambda);
        }
        best.max(0.0).sqrt()
    }

    pub fn norm(&self, kind: MatrixNorm) -> f64 {
        match kind {
            MatrixNorm::Spectral => self.spectral_norm(),
            MatrixNorm::Frobenius => self.frobenius(),
        }
    }

    pub fn max_abs_diff(&self, rhs: &Matrix) -> f64 {
        self.sub(rhs).norm_max()
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        assert!(self.is_square(), "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
            }
        }
        det
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix, LieError> {
        if !self.is_square() {
            return Err(LieError::InvalidArgument(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut inv = Matrix::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            let row_max = (0..n).fold(0.0f64, |m, k| m.max(a[pivot * n + k].abs()));
            if a[pivot * n + col].abs() <= 1e-12 * row_max || row_max == 0.0 {
                return Err(LieError::Singular);
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                    inv.swap(pivot * n + k, col * n + k);
                }
            }
            let p = a[col * n + col];
            for k in 0..n {
                a[col * n + k] /= p;
                inv[col * n + k] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..n {
                    a[r * n + k] -= f * a[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
        Ok(Matrix::from_vec(n, n, inv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Matrix::from_rows(&[[3.0, 0.0], [0.0, -5.0]]);
        assert!((m.spectral_norm() - 5.0).abs() < 1e-12);
        assert!((m.frobenius() - 34f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_start_orthogonal_to_top_direction() {
        // Top singular direction is e2; a single start at e1 would miss it.
        let m = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 7.0, 0.0], [0.0, 0.0, 2.0]]);
        assert!((m.spectral_norm() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let m = Matrix::from_rows(&[[2.0, 1.0, 0.0], [0.5, 3.0, 1.0], [0.0, 1.0, 4.0]]);
        let inv = m.inverse().unwrap();
        assert!(m.matmul(&inv).max_abs_diff(&Matrix::identity(3)) < 1e-14);
        assert!((m.det() * inv.det() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn singular_inverse_is_rejected() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(m.inverse(), Err(LieError::Singular)));
    }
}
