use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are kept sorted and unique within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking the layout invariants.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                nrows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::InvalidStructure(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(
                "col_indices and values differ in length".into(),
            ));
        }
        for r in 0..nrows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if hi < lo {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decrease at row {r}"
                )));
            }
            let cols = &col_indices[lo..hi];
            for (k, &c) in cols.iter().enumerate() {
                if c >= ncols {
                    return Err(Error::InvalidStructure(format!(
                        "column {c} out of range in row {r}"
                    )));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::InvalidStructure(format!(
                        "unsorted or duplicate column in row {r}"
                    )));
                }
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidStructure(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        // sort each row and merge duplicates, preserving the order in which
        // duplicates were supplied so the summation is deterministic
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut perm: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (lo, hi) = (counts[r], counts[r + 1]);
            perm.clear();
            perm.extend(lo..hi);
            perm.sort_by_key(|&p| cols[p]);
            for &p in &perm {
                let c = cols[p];
                if col_indices.len() > row_offsets[r] && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += vals[p];
                } else {
                    col_indices.push(c);
                    values.push(vals[p]);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`, summing each row in stored column order.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                got: y.len(),
            });
        }
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[p] * x[self.col_indices[p]];
            }
            *yr = acc;
        }
        Ok(())
    }

    /// `y = Aᵀ x`.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        Ok(y)
    }

    /// `xᵀ A y`.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let ay = self.spmv(y)?;
        if x.len() != ay.len() {
            return Err(Error::DimensionMismatch {
                expected: ay.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&ay).map(|(a, b)| a * b).sum())
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                col_indices[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a·A + b·B` on the union sparsity pattern.
    pub fn linear_combination(a: f64, lhs: &Self, b: f64, rhs: &Self) -> Result<Self> {
        if lhs.nrows != rhs.nrows || lhs.ncols != rhs.ncols {
            return Err(Error::DimensionMismatch {
                expected: lhs.nrows * lhs.ncols,
                got: rhs.nrows * rhs.ncols,
            });
        }
        let mut row_offsets = Vec::with_capacity(lhs.nrows + 1);
        let mut col_indices = Vec::with_capacity(lhs.nnz() + rhs.nnz());
        let mut values = Vec::with_capacity(lhs.nnz() + rhs.nnz());
        row_offsets.push(0);
        for r in 0..lhs.nrows {
            let mut it_l = lhs.row(r).peekable();
            let mut it_r = rhs.row(r).peekable();
            loop {
                match (it_l.peek().copied(), it_r.peek().copied()) {
                    (Some((cl, vl)), Some((cr, vr))) => {
                        if cl == cr {
                            col_indices.push(cl);
                            values.push(a * vl + b * vr);
                            it_l.next();
                            it_r.next();
                        } else if cl < cr {
                            col_indices.push(cl);
                            values.push(a * vl);
                            it_l.next();
                        } else {
                            col_indices.push(cr);
                            values.push(b * vr);
                            it_r.next();
                        }
                    }
                    (Some((cl, vl)), None) => {
                        col_indices.push(cl);
                        values.push(a * vl);
                        it_l.next();
                    }
                    (None, Some((cr, vr))) => {
                        col_indices.push(cr);
                        values.push(b * vr);
                        it_r.next();
                    }
                    (None, None) => break,
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            nrows: lhs.nrows,
            ncols: lhs.ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(1.0, self, 1.0, other)
    }

    /// Sparse product `A B` (row-wise Gustavson with a dense accumulator).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let n = other.ncols;
        let mut acc = vec![0.0; n];
        let mut marker = vec![usize::MAX; n];
        let mut pattern: Vec<usize> = Vec::new();
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..self.nrows {
            pattern.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = 0.0;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                col_indices.push(c);
                values.push(acc[c]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Galerkin triple product `Pᵀ A Q`.
    pub fn triple_product(p: &Self, a: &Self, q: &Self) -> Result<Self> {
        p.transpose().matmul(&a.matmul(q)?)
    }

    /// Row sums `A·1`.
    /// Matrix whose row `r` is row `order[r]` of `self`; `order` must be a permutation.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.nrows];
        if order.len() != self.nrows || order.iter().any(|&r| r >= self.nrows || std::mem::replace(&mut seen[r], true)) {
            return Err(Error::InvalidStructure("row order is not a permutation".into()));
        }
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        for &r in order {
            let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
            col_indices.extend_from_slice(&self.col_indices[lo..hi]);
            values.extend_from_slice(&self.values[lo..hi]);
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Largest entrywise asymmetry `max |A_ij - A_ji|`; `None` if not square.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if self.nrows != self.ncols {
            return None;
        }
        let t = self.transpose();
        let diff = Self::linear_combination(1.0, self, -1.0, &t).ok()?;
        Some(diff.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
