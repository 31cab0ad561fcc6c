//! Small dense matrices, used as a brute-force reference path in tests.

use super::SparseMatrix;
use crate::error::{Error, Result};

/// Upper bound on the number of entries `to_dense` will materialize.
pub const DENSE_GUARD: usize = 1_000_000;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                self.data[i * self.ncols..(i + 1) * self.ncols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.nrows != self.ncols {
            return Err(Error::NotSquare {
                nrows: self.nrows,
                ncols: self.ncols,
            });
        }
        let n = self.nrows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if pmax == 0.0 {
                return Err(Error::SingularPivot { column: k, row: p });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                x.swap(k, p);
            }
            let piv = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / piv;
                if f == 0.0 {
                    continue;
                }
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k * n + j] * x[j]).sum();
            x[k] = (x[k] - s) / a[k * n + k];
        }
        Ok(x)
    }

    /// Dense Cholesky; `true` iff the matrix is numerically SPD.
    pub fn is_positive_definite(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let n = self.nrows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return false;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        true
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

impl SparseMatrix {
    /// Dense image of the matrix, refused above [`DENSE_GUARD`] entries.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let entries = self.nrows() * self.ncols();
        if entries > DENSE_GUARD {
            return Err(Error::SizeGuard {
                entries,
                limit: DENSE_GUARD,
            });
        }
        let mut d = DenseMatrix::zeros(self.nrows(), self.ncols());
        for r in 0..self.nrows() {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        Ok(d)
    }

    /// Sparse image of a dense matrix, dropping exact zeros.
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut trip = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if d[(i, j)] != 0.0 {
                    trip.push((i, j, d[(i, j)]));
                }
            }
        }
        Self::from_triplets(d.nrows(), d.ncols(), &trip).expect("indices in range")
    }
}
