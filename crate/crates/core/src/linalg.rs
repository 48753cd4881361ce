//! Small dense linear algebra over any [`Real`] scalar.
//!
//! The systems solved here are at most a handful of unknowns, but they have
//! to run on dual numbers so that derivatives propagate through the solve.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::diffkernel::Real;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Real> Matrix<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![R::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = R::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<R>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<R>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.cols..(i + 1) * self.cols]
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

    pub fn mul_vec(&self, v: &[R]) -> Vec<R> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }

    /// `vᵀ·A`, i.e. `Aᵀ·v`.
    pub fn tr_mul_vec(&self, v: &[R]) -> Vec<R> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![R::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o = *o + *vi * self[(i, j)];
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix<R>) -> Matrix<R> {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Bilinear form `aᵀ·M·b`.
    pub fn bilinear(&self, a: &[R], b: &[R]) -> R {
        dot(a, &self.mul_vec(b))
    }

    pub fn map<S: Real>(&self, f: impl Fn(R) -> S) -> Matrix<S> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(|v| v.value())
    }

    pub fn to_rows(&self) -> Vec<Vec<R>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Solves `A·x = b` by Gaussian elimination with partial pivoting on the
    /// primal values.
    pub fn solve(&self, b: &[R]) -> Result<Vec<R>> {
        let lu = Lu::factor(self)?;
        Ok(lu.solve(b))
    }

    pub fn inverse(&self) -> Result<Matrix<R>> {
        let lu = Lu::factor(self)?;
        let n = self.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![R::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = R::zero());
            e[j] = R::one();
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

impl Matrix<f64> {
    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest and smallest singular values.
    pub fn singular_extremes(&self) -> (f64, f64) {
        if self.rows == 0 || self.cols == 0 {
            return (0.0, 0.0);
        }
        let sv = self.to_nalgebra().singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        (max, min)
    }

    /// 2-norm condition number; `inf` for exactly singular matrices.
    pub fn condition(&self) -> f64 {
        let (max, min) = self.singular_extremes();
        if min == 0.0 || !min.is_finite() || !max.is_finite() {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

impl<R> Index<(usize, usize)> for Matrix<R> {
    type Output = R;
    fn index(&self, (i, j): (usize, usize)) -> &R {
        &self.data[i * self.cols + j]
    }
}

impl<R> IndexMut<(usize, usize)> for Matrix<R> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut R {
        &mut self.data[i * self.cols + j]
    }
}

struct Lu<R> {
    n: usize,
    lu: Matrix<R>,
    perm: Vec<usize>,
}

impl<R: Real> Lu<R> {
    fn factor(a: &Matrix<R>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::Dimension {
                expected: a.rows,
                got: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.value().abs()));
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].value().abs()))
                .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if pv == 0.0 || pv <= f64::EPSILON * scale * 1e-4 || !pv.is_finite() {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    fn solve(&self, b: &[R]) -> Vec<R> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<R> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] = x[i] - self.lu[(i, j)] * x[j];
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter()
        .zip(b)
        .fold(R::zero(), |acc, (x, y)| acc + *x * *y)
}

pub fn axpy<R: Real>(alpha: R, x: &[R], y: &[R]) -> Vec<R> {
    x.iter().zip(y).map(|(a, b)| alpha * *a + *b).collect()
}

pub fn add<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

pub fn sub<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub fn scale<R: Real>(alpha: R, a: &[R]) -> Vec<R> {
    a.iter().map(|x| alpha * *x).collect()
}

pub fn neg<R: Real>(a: &[R]) -> Vec<R> {
    a.iter().map(|x| -*x).collect()
}

pub fn lift<R: Real>(a: &[f64]) -> Vec<R> {
    a.iter().map(|v| R::cst(*v)).collect()
}

pub fn values<R: Real>(a: &[R]) -> Vec<f64> {
    a.iter().map(Real::value).collect()
}

/// Max-norm of a vector.
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
