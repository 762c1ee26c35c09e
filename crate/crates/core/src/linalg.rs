//! Small dense linear algebra.
//!
//! Everything here targets matrices of dimension up to roughly a hundred:
//! row-major storage, O(n³) kernels, and a one-sided Jacobi SVD that backs
//! the pseudoinverse, numerical rank and singular-value queries.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{invalid, Error, Result};

/// Default relative threshold below which singular values count as zero.
pub const DEFAULT_SV_TOL: f64 = 1e-9;

/// Default step for central finite differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A dense real vector of fixed length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Self(data)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// The `i`-th standard basis vector of length `n`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = 1.0;
        v
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self(s.to_vec())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|a| a.is_finite())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.iter().map(|a| a * s).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.iter().zip(other.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Vector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(other.iter()) {
            *a += s * b;
        }
    }

    pub fn dist(&self, other: &Vector) -> f64 {
        self.sub(other).norm()
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, cols: &[Vector]) -> Result<Self> {
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: c.len(),
                });
            }
            for i in 0..rows {
                m[(i, j)] = c[i];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|a| a * a).sum())
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: other.rows,
            });
        }
        let cols = self.cols + other.cols;
        let mut out = Matrix::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
            out.data[i * cols + self.cols..(i + 1) * cols].copy_from_slice(other.row(i));
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Matrix-vector product.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if v.len() != m.cols {
        return Err(Error::DimensionMismatch {
            expected: m.cols,
            got: v.len(),
        });
    }
    Ok((0..m.rows)
        .map(|i| m.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
        .collect())
}

/// Thin singular value decomposition `m = U diag(s) Vᵀ`.
///
/// `u` is `rows × r`, `v` is `cols × r` with `r = min(rows, cols)`, and the
/// singular values are sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix passed to svd".into()));
    }
    if m.rows < m.cols {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let (rows, n) = (m.rows, m.cols);
    // Work column-major: a[j] is column j.
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j).into_inner()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| Vector::unit(n, j).into_inner()).collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    alpha += a[p][i] * a[p][i];
                    beta += a[q][i] * a[q][i];
                    gamma += a[p][i] * a[q][i];
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..rows {
                    let (ap, aq) = (a[p][i], a[q][i]);
                    a[p][i] = c * ap - s * aq;
                    a[q][i] = s * ap + c * aq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[p][i], v[q][i]);
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = a
        .iter()
        .enumerate()
        .map(|(j, col)| (libm::sqrt(col.iter().map(|x| x * x).sum()), j))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let mut u = Matrix::zeros(rows, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(sigma, j)) in order.iter().enumerate() {
        s.push(sigma);
        for i in 0..rows {
            u[(i, k)] = if sigma > 0.0 { a[j][i] / sigma } else { 0.0 };
        }
        for i in 0..n {
            vm[(i, k)] = v[j][i];
        }
    }
    Ok(Svd { u, s, v: vm })
}

/// Singular values in decreasing order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.s)
}

/// Moore–Penrose pseudoinverse, truncating singular values at or below
/// `tol · σ_max`.
pub fn pseudoinverse(m: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0) {
        return Err(invalid("pseudoinverse tolerance must be positive"));
    }
    let Svd { u, s, v } = svd(m)?;
    let cutoff = tol * s.first().copied().unwrap_or(0.0);
    let mut p = Matrix::zeros(m.cols, m.rows);
    for (k, &sigma) in s.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        let inv = 1.0 / sigma;
        for i in 0..m.cols {
            let vik = v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m.rows {
                p[(i, j)] += vik * u[(j, k)];
            }
        }
    }
    Ok(p)
}

/// Smallest singular value strictly above `tol · σ_max`.
pub fn smallest_nonzero_singular_value(m: &Matrix, tol: f64) -> Result<f64> {
    let s = singular_values(m)?;
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return Err(invalid("all-zero matrix has no nonzero singular value"));
    }
    let cutoff = tol * max;
    Ok(s.into_iter()
        .filter(|&x| x > cutoff)
        .fold(f64::INFINITY, f64::min))
}

/// Number of singular values strictly above `tol · σ_max`.
pub fn numerical_rank(m: &Matrix, tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > tol * max).count())
}

/// Solves `q·z = b` for symmetric positive definite `q` by Cholesky.
pub fn cholesky_solve(q: &Matrix, b: &Vector) -> Result<Vector> {
    let n = q.rows;
    if q.cols != n {
        return Err(invalid("cholesky_solve needs a square matrix"));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let l = cholesky(q)?;
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * z[k]).sum();
        z[i] = (b[i] - s) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[(k, i)] * z[k]).sum();
        z[i] = (z[i] - s) / l[(i, i)];
    }
    Ok(Vector::new(z))
}

/// Lower-triangular Cholesky factor; fails unless `q` is positive definite.
pub fn cholesky(q: &Matrix) -> Result<Matrix> {
    let n = q.rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = q[(i, i)] - s;
                if !(d > 0.0) {
                    return Err(invalid("matrix is not positive definite"));
                }
                l[(i, i)] = libm::sqrt(d);
            } else {
                l[(i, j)] = (q[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Central-difference gradient of a scalar field.
///
/// Component `i` is `(h(p + step·eᵢ) − h(p − step·eᵢ)) / (2·step)`.
pub fn central_diff_grad<F>(h: F, p: &Vector, step: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> f64,
{
    if !(step > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut probe = p.clone();
    let mut out = Vector::zeros(p.len());
    for i in 0..p.len() {
        probe[i] = p[i] + step;
        let hi = h(&probe);
        probe[i] = p[i] - step;
        let lo = h(&probe);
        probe[i] = p[i];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFinite("field value during finite differencing".into()));
        }
        out[i] = (hi - lo) / (2.0 * step);
    }
    Ok(out)
}
