//! Small dense linear algebra for the `P x P` systems that show up in the
//! sampler and the quantile fits (`P` is at most a few dozen).

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn trace(&self) -> F {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// Adds `w * x x'` to the upper triangle, skipping zero entries of `x`.
    /// Call [`Matrix::mirror_upper`] once accumulation is complete.
    #[inline]
    pub fn add_outer_upper(&mut self, x: &[F], w: F) {
        let n = self.cols;
        for (a, &xa) in x.iter().enumerate() {
            if xa == F::zero() {
                continue;
            }
            let s = w * xa;
            let row = &mut self.data[a * n..(a + 1) * n];
            for b in a..n {
                row[b] = row[b] + s * x[b];
            }
        }
    }

    pub fn mirror_upper(&mut self) {
        for a in 0..self.rows {
            for b in 0..a {
                self.data[a * self.cols + b] = self.data[b * self.cols + a];
            }
        }
    }
}

impl<F> Index<(usize, usize)> for Matrix<F> {
    type Output = F;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &F {
        &self.data[r * self.cols + c]
    }
}

impl<F> IndexMut<(usize, usize)> for Matrix<F> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut F {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower Cholesky factor `L` with `A = L L'`.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    l: Matrix<F>,
}

impl<F: Real> Cholesky<F> {
    /// Plain factorization; fails on the first nonpositive pivot.
    pub fn new(a: &Matrix<F>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Shape("cholesky needs a square matrix".into()));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > F::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    /// Factorization with diagonal jitter: on failure adds
    /// `1e-10 * trace / n` to the diagonal and escalates by x10, at most
    /// three times.
    pub fn with_jitter(a: &Matrix<F>) -> Result<Self> {
        if let Ok(c) = Self::new(a) {
            return Ok(c);
        }
        let n = a.rows();
        let base = (a.trace() / F::from_count(n.max(1))).abs();
        let base = if base > F::zero() { base } else { F::one() };
        let mut jitter = F::lit(1e-10) * base;
        for _ in 0..3 {
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] = b[(i, i)] + jitter;
            }
            if let Ok(c) = Self::new(&b) {
                return Ok(c);
            }
            jitter = jitter * F::lit(10.0);
        }
        Err(Error::NotPositiveDefinite)
    }

    pub fn factor(&self) -> &Matrix<F> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[F]) -> Vec<F> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `L' x = b`.
    pub fn solve_upper(&self, b: &[F]) -> Vec<F> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L z`
    pub fn mul_lower(&self, z: &[F]) -> Vec<F> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..=i).fold(F::zero(), |acc, k| acc + self.l[(i, k)] * z[k]))
            .collect()
    }
}
