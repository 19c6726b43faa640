//! Small dense matrices and vectors.
//!
//! Blocks in this crate are tiny (state dimensions of 1 to 4 in the shipped
//! problems), so storage is inline for up to four entries and falls back to
//! the heap above that. All arithmetic is `f64`.

use std::fmt;
use std::ops::{Index, IndexMut};

use smallvec::SmallVec;

use crate::error::{Error, Result};

type Storage = SmallVec<[f64; 4]>;

/// Pivots with magnitude below this are treated as exact zeros.
pub const SINGULAR_PIVOT: f64 = 1e-300;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Storage,
}

/// Dense column vector.
#[derive(Clone, PartialEq, Default)]
pub struct Vector(Storage);

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "matrix shape {rows}x{cols} has an empty side"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Mat::new",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: Storage::from_vec(data),
        })
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(n_rows > 0 && n_cols > 0, "matrix must be non-empty");
        let mut data = Storage::with_capacity(n_rows * n_cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: n_rows,
            cols: n_cols,
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be non-empty");
        Self {
            rows,
            cols,
            data: SmallVec::from_elem(0.0, rows * cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
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

    /// Row-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn add(&self, other: &Mat) -> Result<Self> {
        self.check_same_shape(other, "Mat::add")?;
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(other.data.iter()) {
            *o += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Mat) -> Result<Self> {
        self.check_same_shape(other, "Mat::sub")?;
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(other.data.iter()) {
            *o -= b;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_same_shape(&self, other: &Mat, op: &'static str) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op,
                expected: self.rows,
                found: other.rows,
            });
        }
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op,
                expected: self.cols,
                found: other.cols,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.cols).collect();
        f.debug_struct("Mat")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("data", &rows)
            .finish()
    }
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Self(SmallVec::from_elem(0.0, dim))
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(SmallVec::from_elem(value, dim))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn add(&self, other: &Vector) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect()
    }

    pub fn sub(&self, other: &Vector) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.0.iter().map(|a| a * s).collect()
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &Vector) {
        debug_assert_eq!(self.dim(), x.dim());
        for (y, x) in self.0.iter_mut().zip(x.0.iter()) {
            *y += alpha * x;
        }
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(self)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(Storage::from_vec(v))
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Self(Storage::from_slice(v))
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(v: [f64; N]) -> Self {
        Self(Storage::from_slice(&v))
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "mat_mul",
            expected: a.cols,
            found: b.rows,
        });
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    mul_into(a, b, &mut out.data);
    Ok(out)
}

pub fn mat_vec(a: &Mat, v: &Vector) -> Result<Vector> {
    if a.cols != v.dim() {
        return Err(Error::DimensionMismatch {
            op: "mat_vec",
            expected: a.cols,
            found: v.dim(),
        });
    }
    Ok(a.data
        .chunks_exact(a.cols)
        .map(|row| dot(row, &v.0))
        .collect())
}

/// Max absolute entry of `v` (0 for an empty vector).
pub fn inf_norm(v: &Vector) -> f64 {
    v.0.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Max absolute entry over a sequence of blocks.
pub fn blocks_inf_norm<'a, I: IntoIterator<Item = &'a Vector>>(blocks: I) -> f64 {
    blocks.into_iter().map(inf_norm).fold(0.0, f64::max)
}

/// Solves `a x = b` through LU with partial pivoting.
pub fn lu_solve(a: &Mat, b: &Vector) -> Result<Vector> {
    Lu::factor(a)?.solve_vec(b)
}

/// Solves `a X = B` column by column.
pub fn lu_solve_mat(a: &Mat, b: &Mat) -> Result<Mat> {
    Lu::factor(a)?.solve_mat(b)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = a * b`, with `out` sized `a.rows * b.cols`.
#[inline]
fn mul_into(a: &Mat, b: &Mat, out: &mut [f64]) {
    let (n, m, p) = (a.rows, a.cols, b.cols);
    for i in 0..n {
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..m {
                acc += a.data[i * m + k] * b.data[k * p + j];
            }
            out[i * p + j] = acc;
        }
    }
}

/// `later <- later * earlier` for square matrices of equal size.
pub(crate) fn left_mul_assign(later: &mut Mat, earlier: &Mat) {
    debug_assert!(later.is_square() && earlier.is_square() && later.rows == earlier.rows);
    let mut tmp: SmallVec<[f64; 16]> = SmallVec::from_elem(0.0, later.data.len());
    mul_into(later, earlier, &mut tmp);
    later.data.copy_from_slice(&tmp);
}

/// `c <- m * x + c`.
pub(crate) fn gemv_add_assign(c: &mut Vector, m: &Mat, x: &Vector) {
    debug_assert_eq!(m.cols, x.dim());
    debug_assert_eq!(m.rows, c.dim());
    for (ci, row) in c.0.iter_mut().zip(m.data.chunks_exact(m.cols)) {
        *ci += dot(row, &x.0);
    }
}

/// Packed LU factors of a square matrix, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Storage,
    perm: SmallVec<[usize; 4]>,
    parity: f64,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                op: "Lu::factor",
                expected: a.rows,
                found: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: SmallVec<[usize; 4]> = (0..n).collect();
        let mut parity = 1.0;

        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            // NaN pivots compare false everywhere; catch them here too.
            if !(pmax >= SINGULAR_PIVOT) {
                return Err(Error::SingularMatrix { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                parity = -parity;
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let l = lu[i * n + k] / pivot;
                lu[i * n + k] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= l * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, parity })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn det(&self) -> f64 {
        (0..self.n).fold(self.parity, |d, i| d * self.lu[i * self.n + i])
    }

    pub fn solve_vec(&self, b: &Vector) -> Result<Vector> {
        if b.dim() != self.n {
            return Err(Error::DimensionMismatch {
                op: "lu_solve",
                expected: self.n,
                found: b.dim(),
            });
        }
        let mut x: Vector = self.perm.iter().map(|&p| b[p]).collect();
        self.substitute(x.as_mut_slice(), 1);
        Ok(x)
    }

    pub fn solve_mat(&self, b: &Mat) -> Result<Mat> {
        if b.rows != self.n {
            return Err(Error::DimensionMismatch {
                op: "lu_solve",
                expected: self.n,
                found: b.rows,
            });
        }
        let cols = b.cols;
        let mut x = Mat::zeros(self.n, cols);
        for (i, &p) in self.perm.iter().enumerate() {
            x.data[i * cols..(i + 1) * cols].copy_from_slice(&b.data[p * cols..(p + 1) * cols]);
        }
        for j in 0..cols {
            self.substitute(&mut x.data[j..], cols);
        }
        Ok(x)
    }

    /// Forward then back substitution on a strided column already permuted.
    fn substitute(&self, x: &mut [f64], stride: usize) {
        let n = self.n;
        let lu = &self.lu;
        for i in 0..n {
            let mut s = x[i * stride];
            for k in 0..i {
                s -= lu[i * n + k] * x[k * stride];
            }
            x[i * stride] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i * stride];
            for k in (i + 1)..n {
                s -= lu[i * n + k] * x[k * stride];
            }
            x[i * stride] = s / lu[i * n + i];
        }
    }
}
