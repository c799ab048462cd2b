//! Small dense matrices.
//!
//! Row-major storage, generic over the entry type. Factorizations are
//! written against [`Entry`], which covers real floats and their complex
//! counterparts, so the same LU and null-space code serves both the real
//! pipelines and the complex eigenvector computations.

use std::fmt;
use std::ops::{Index, IndexMut, Neg};

use num_complex::Complex;
use num_traits::{Float, Num, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("ragged rows: row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular to working precision")]
    Singular,
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>")]
#[serde(bound(serialize = "T: Clone + Serialize", deserialize = "T: Clone + Deserialize<'de>"))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != ncols {
                return Err(LinalgError::Ragged { row: i, found: r.len(), expected: ncols });
            }
            data.extend(r);
        }
        Ok(Matrix { rows: nrows, cols: ncols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != rows) {
            return Err(LinalgError::Ragged { row: j, found: c.len(), expected: rows });
        }
        Ok(Matrix::from_fn(rows, cols, |i, j| columns[j][i].clone()))
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T: Clone + Zero> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }
}

impl<T: Clone + Zero + One> Matrix<T> {
    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn diagonal(d: &[T]) -> Self {
        let n = d.len();
        Matrix::from_fn(n, n, |i, j| if i == j { d[i].clone() } else { T::zero() })
    }
}

impl<T: Clone + Num> Matrix<T> {
    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::<T>::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)].clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out[(i, j)].clone() + a.clone() * other[(k, j)].clone();
                    out[(i, j)] = v;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    /// `xᵀ A`.
    pub fn vec_mul(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.rows, x.len(), "vec_mul dimension mismatch");
        (0..self.cols)
            .map(|j| {
                (0..self.rows).fold(T::zero(), |acc, i| acc + x[i].clone() * self[(i, j)].clone())
            })
            .collect()
    }

    pub fn add(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].clone() + other[(i, j)].clone())
    }

    pub fn sub(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].clone() - other[(i, j)].clone())
    }

    pub fn scale(&self, s: T) -> Matrix<T> {
        self.map(|v| v.clone() * s.clone())
    }
}

impl<T: Real> Matrix<T> {
    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn norm_fro(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_complex(&self) -> Matrix<Complex<T>> {
        self.map(|v| Complex::new(*v, T::zero()))
    }


    /// Whether every off-diagonal entry is nonnegative.
    pub fn is_metzler(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] >= T::zero()))
    }
}

impl<E: Entry> Matrix<E> {
    /// 1-norm condition number, `‖A‖₁‖A⁻¹‖₁`; infinite when singular.
    pub fn condition_1(&self) -> E::R {
        let norm = |m: &Matrix<E>| {
            (0..m.cols)
                .map(|j| (0..m.rows).map(|i| m[(i, j)].modulus()).sum::<E::R>())
                .fold(E::R::zero(), E::R::max)
        };
        match self.inverse() {
            Ok(inv) => norm(self) * norm(&inv),
            Err(_) => E::R::infinity(),
        }
    }

    pub fn lu(&self) -> Result<Lu<E>, LinalgError> {
        Lu::new(self)
    }

    pub fn solve(&self, b: &[E]) -> Result<Vec<E>, LinalgError> {
        Ok(self.lu()?.solve(b))
    }

    pub fn inverse(&self) -> Result<Matrix<E>, LinalgError> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![E::zero(); n];
            e[j] = E::one();
            cols.push(lu.solve(&e));
        }
        Matrix::from_columns(&cols)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = (0..self.rows)
            .map(|i| &self.data[i * self.cols..(i + 1) * self.cols])
            .collect();
        f.debug_list().entries(rows).finish()
    }
}

/// Plain-text rendering: one row per line, space-separated entries.
impl<T: fmt::Display> fmt::Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    f.write_str(" ")?;
                }
                fmt::Display::fmt(&self.data[i * self.cols + j], f)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl<T: Clone> TryFrom<Vec<Vec<T>>> for Matrix<T> {
    type Error = LinalgError;
    fn try_from(rows: Vec<Vec<T>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(rows)
    }
}

impl<T: Clone> From<Matrix<T>> for Vec<Vec<T>> {
    fn from(m: Matrix<T>) -> Self {
        m.to_rows()
    }
}

/// Entries a factorization can pivot on: real floats and complex floats.
pub trait Entry: Clone + Num + Neg<Output = Self> + fmt::Debug + Send + Sync {
    type R: Real;
    fn modulus(&self) -> Self::R;
    fn from_real(r: Self::R) -> Self;
    fn conj(&self) -> Self;
}

impl<T: Real> Entry for T {
    type R = T;
    #[inline]
    fn modulus(&self) -> T {
        self.abs()
    }
    #[inline]
    fn from_real(r: T) -> T {
        r
    }
    #[inline]
    fn conj(&self) -> T {
        *self
    }
}

impl<T: Real> Entry for Complex<T> {
    type R = T;
    #[inline]
    fn modulus(&self) -> T {
        self.norm()
    }
    #[inline]
    fn from_real(r: T) -> Self {
        Complex::new(r, T::zero())
    }
    #[inline]
    fn conj(&self) -> Self {
        Complex::conj(self)
    }
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Clone, Debug)]
pub struct Lu<E> {
    lu: Matrix<E>,
    perm: Vec<usize>,
}

impl<E: Entry> Lu<E> {
    pub fn new(a: &Matrix<E>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension(format!("{}x{} is not square", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a
            .as_slice()
            .iter()
            .fold(E::R::zero(), |m, v| m.max(v.modulus()))
            .max(E::R::min_positive_value());
        let tiny = scale * E::R::epsilon() * E::R::lit(n.max(1) as f64);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].modulus()))
                .fold((k, E::R::zero()), |best, c| if c.1 > best.1 { c } else { best });
            if pmax <= tiny {
                return Err(LinalgError::Singular);
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)].clone();
                    lu[(k, j)] = lu[(p, j)].clone();
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)].clone();
            for i in k + 1..n {
                let factor = lu[(i, k)].clone() / pivot.clone();
                lu[(i, k)] = factor.clone();
                if factor.is_zero() {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu[(i, j)].clone() - factor.clone() * lu[(k, j)].clone();
                    lu[(i, j)] = v;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[E]) -> Vec<E> {
        let n = self.lu.rows;
        let mut x: Vec<E> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for k in 0..i {
                let v = x[i].clone() - self.lu[(i, k)].clone() * x[k].clone();
                x[i] = v;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let v = x[i].clone() - self.lu[(i, k)].clone() * x[k].clone();
                x[i] = v;
            }
            x[i] = x[i].clone() / self.lu[(i, i)].clone();
        }
        x
    }
}

/// Null-space basis of `a` with a prescribed nullity.
///
/// Gaussian elimination with complete pivoting is run for `n - nullity`
/// steps; the remaining columns are treated as free. Returned vectors are
/// normalized to unit Euclidean norm. The caller checks residuals to decide
/// whether the prescribed nullity was genuine.
pub fn null_space<E: Entry>(a: &Matrix<E>, nullity: usize) -> Vec<Vec<E>> {
    let n = a.cols;
    let m = a.rows;
    let rank = n.saturating_sub(nullity).min(m);
    let mut u = a.clone();
    let mut colperm: Vec<usize> = (0..n).collect();
    let mut r = 0;
    while r < rank {
        let mut best = (r, r, E::R::zero());
        for i in r..m {
            for j in r..n {
                let v = u[(i, j)].modulus();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 == E::R::zero() {
            break;
        }
        let (pi, pj, _) = best;
        if pi != r {
            for j in 0..n {
                let t = u[(r, j)].clone();
                u[(r, j)] = u[(pi, j)].clone();
                u[(pi, j)] = t;
            }
        }
        if pj != r {
            for i in 0..m {
                let t = u[(i, r)].clone();
                u[(i, r)] = u[(i, pj)].clone();
                u[(i, pj)] = t;
            }
            colperm.swap(r, pj);
        }
        let pivot = u[(r, r)].clone();
        for i in r + 1..m {
            let factor = u[(i, r)].clone() / pivot.clone();
            if factor.is_zero() {
                continue;
            }
            for j in r..n {
                let v = u[(i, j)].clone() - factor.clone() * u[(r, j)].clone();
                u[(i, j)] = v;
            }
        }
        r += 1;
    }
    let mut basis = Vec::with_capacity(n - r);
    for free in r..n {
        let mut z = vec![E::zero(); n];
        z[free] = E::one();
        for i in (0..r).rev() {
            let mut acc = E::zero();
            for j in i + 1..n {
                acc = acc + u[(i, j)].clone() * z[j].clone();
            }
            z[i] = -acc / u[(i, i)].clone();
        }
        let mut x = vec![E::zero(); n];
        for (k, &c) in colperm.iter().enumerate() {
            x[c] = z[k].clone();
        }
        normalize(&mut x);
        basis.push(x);
    }
    basis
}

pub fn norm2<E: Entry>(x: &[E]) -> E::R {
    x.iter().map(|v| v.modulus() * v.modulus()).sum::<E::R>().sqrt()
}

pub fn normalize<E: Entry>(x: &mut [E]) {
    let n = norm2(x);
    if n > E::R::zero() {
        let s = E::from_real(E::R::one() / n);
        for v in x.iter_mut() {
            *v = v.clone() * s.clone();
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}
