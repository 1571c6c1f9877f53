//! Small dense linear algebra: row-major matrices, a cyclic Jacobi
//! eigensolver for symmetric input, Cholesky inversion and column-rank
//! detection. Sized for desk-scale problems (n up to a few hundred).

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![T::one(); n])
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows. Returns `None` on ragged input.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Option<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return None;
            }
            data.extend_from_slice(r);
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diag().into_iter().sum()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `x' M x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }

    /// `X' X` for a design matrix with observations as rows.
    pub fn gram(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            out.add_outer(self.row(r), T::one());
        }
        out
    }

    /// In-place `self += s · x x'`.
    pub fn add_outer(&mut self, x: &[T], s: T) {
        assert!(self.rows == x.len() && self.cols == x.len());
        for i in 0..x.len() {
            let xi = s * x[i];
            if xi == T::zero() {
                continue;
            }
            for j in 0..x.len() {
                self[(i, j)] = self[(i, j)] + xi * x[j];
            }
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.rows == other.rows && self.cols == other.cols);
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> T {
        let scale = self.max_abs().max(T::min_positive_value());
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// Averages the matrix with its transpose.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |r, c| {
            (self[(r, c)] + self[(c, r)]) * half
        })
    }

    /// Selects a subset of columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |r, c| self[(r, cols[c])])
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm1<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|v| v.abs()).sum()
}

pub fn norm_inf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&v| v * s).collect()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn unit<T: Scalar>(n: usize, i: usize) -> Vec<T> {
    let mut e = vec![T::zero(); n];
    e[i] = T::one();
    e
}

pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

/// Raw symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in diagonal order (unsorted) and the matrix whose
/// columns are the matching eigenvectors. Diagonal input is returned
/// untouched with identity eigenvectors. Off-diagonal entries are annihilated
/// until they are negligible relative to the geometric mean of the two
/// diagonal entries they couple, which keeps small eigenvalues of graded
/// positive-definite matrices accurate.
pub fn jacobi_eigen<T: Scalar>(m: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();
    let hundred = T::lit(100.0);
    let half = T::lit(0.5);

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                if apq.abs() <= eps * (app * aqq).abs().sqrt() {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                rotated = true;
                let h = aqq - app;
                let g = hundred * apq.abs();
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = half * h / apq;
                    let t = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let tau = s / (T::one() + c);
                let shift = t * apq;
                a[(p, p)] = app - shift;
                a[(q, q)] = aqq + shift;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for j in 0..n {
                    if j == p || j == q {
                        continue;
                    }
                    let g = a[(j, p)];
                    let h = a[(j, q)];
                    let np = g - s * (h + g * tau);
                    let nq = h + s * (g - h * tau);
                    a[(j, p)] = np;
                    a[(p, j)] = np;
                    a[(j, q)] = nq;
                    a[(q, j)] = nq;
                }
                for j in 0..n {
                    let g = v[(j, p)];
                    let h = v[(j, q)];
                    v[(j, p)] = g - s * (h + g * tau);
                    v[(j, q)] = h + s * (g - h * tau);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (a.diag(), v)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Scalar>(m: &Matrix<T>) -> Option<Matrix<T>> {
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L L' y = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Inverse of a symmetric positive-definite matrix, symmetrized on output.
pub fn spd_inverse<T: Scalar>(m: &Matrix<T>) -> Option<Matrix<T>> {
    let n = m.rows();
    let l = cholesky(m)?;
    let mut inv = Matrix::zeros(n, n);
    for c in 0..n {
        let col = cholesky_solve(&l, &unit(n, c));
        for r in 0..n {
            inv[(r, c)] = col[r];
        }
    }
    Some(inv.symmetrized())
}

/// Greedy column selection by modified Gram-Schmidt with one
/// re-orthogonalization pass. A column is kept when its residual norm exceeds
/// `rel_tol` times the largest column norm of `x`.
pub fn independent_columns<T: Scalar>(x: &Matrix<T>, rel_tol: T) -> Vec<usize> {
    let top = (0..x.cols())
        .map(|c| norm2(&x.column(c)))
        .fold(T::zero(), |m, v| m.max(v));
    if top == T::zero() {
        return Vec::new();
    }
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut kept = Vec::new();
    for c in 0..x.cols() {
        let mut r = x.column(c);
        for _ in 0..2 {
            for q in &basis {
                let h = dot(q, &r);
                for (ri, &qi) in r.iter_mut().zip(q) {
                    *ri = *ri - h * qi;
                }
            }
        }
        let nr = norm2(&r);
        if nr > rel_tol * top {
            basis.push(scale(&r, T::one() / nr));
            kept.push(c);
        }
    }
    kept
}

/// Incremental row-space tracker: reports whether each appended row enlarges
/// the span of the rows seen so far.
#[derive(Clone, Debug)]
pub struct RowSpan<T> {
    dim: usize,
    basis: Vec<Vec<T>>,
    rel_tol: T,
}

impl<T: Scalar> RowSpan<T> {
    pub fn new(dim: usize, rel_tol: T) -> Self {
        Self {
            dim,
            basis: Vec::new(),
            rel_tol,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.dim
    }

    /// Absorbs a row; returns `true` when the rank grew.
    pub fn push(&mut self, row: &[T]) -> bool {
        let n0 = norm2(row);
        if n0 == T::zero() || self.is_full() {
            return false;
        }
        let mut r = row.to_vec();
        for _ in 0..2 {
            for q in &self.basis {
                let h = dot(q, &r);
                for (ri, &qi) in r.iter_mut().zip(q) {
                    *ri = *ri - h * qi;
                }
            }
        }
        let nr = norm2(&r);
        if nr > self.rel_tol * n0 {
            self.basis.push(scale(&r, T::one() / nr));
            true
        } else {
            false
        }
    }
}
