//! Small dense matrix type and the Cholesky routines used by the
//! log-determinant objective.

use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += v;
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Failure of a Cholesky factorization: the pivot at `index` was not
/// strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub index: usize,
    pub pivot: f64,
    /// Ratio of the largest to the smallest squared pivot seen before the
    /// failure; a cheap lower bound on the condition number.
    pub condition_estimate: f64,
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self, NotPositiveDefinite> {
        assert!(a.is_square(), "cholesky of non-square matrix");
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        let mut max_pivot = 0.0f64;
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            let d = diag.as_f64();
            if !(d > 0.0 && d.is_finite()) {
                let floor = if min_pivot.is_finite() { min_pivot } else { 1.0 };
                return Err(NotPositiveDefinite {
                    index: j,
                    pivot: d,
                    condition_estimate: max_pivot.max(a[(j, j)].as_f64().abs())
                        / d.abs().max(f64::MIN_POSITIVE).min(floor),
                });
            }
            max_pivot = max_pivot.max(d);
            min_pivot = min_pivot.min(d);
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `log det A = 2 Σ log L_ii`
    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].ln()).sum()
    }

    /// Solves `L y = b` in place.
    pub fn forward_substitute(&self, b: &mut [T]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l.row(i)[..i];
            let s = row.iter().zip(&b[..i]).fold(b[i], |acc, (&l, &x)| acc - l * x);
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_substitute(&self, y: &mut [T]) {
        let n = self.dim();
        assert_eq!(y.len(), n);
        for i in (0..n).rev() {
            let s = ((i + 1)..n).zip(&y[i + 1..]).fold(y[i], |acc, (k, &x)| acc - self.l[(k, i)] * x);
            y[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.backward_substitute(&mut x);
        x
    }
}
