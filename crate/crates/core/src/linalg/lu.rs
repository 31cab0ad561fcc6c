//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Columns are visited in an approximate-minimum-degree order computed on the
//! pattern of `A + Aᵀ`; rows are chosen by threshold partial pivoting with a
//! preference for the diagonal so the symmetric ordering keeps its effect on
//! fill. The factor satisfies `P A Q = L U` with `L` unit lower triangular.

use super::SparseMatrix;
use crate::error::{Error, Result};

/// Diagonal entries within this factor of the column maximum are accepted as pivots.
pub const PIVOT_THRESHOLD: f64 = 0.1;

/// Pivots below this multiple of the column's max entry are treated as zero.
const SINGULAR_RELATIVE: f64 = 64.0 * f64::EPSILON;

/// Compressed sparse column storage used internally by the factors.
#[derive(Clone, Debug, Default)]
struct Csc {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

/// Reusable LU factorization of a square sparse matrix.
#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    lower: Csc,
    upper: Csc,
    /// `row_pinv[i]`: pivot step at which original row `i` was eliminated.
    row_pinv: Vec<usize>,
    /// `col_perm[k]`: original column eliminated at step `k`.
    col_perm: Vec<usize>,
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in `L` and `U` together.
    pub fn fill(&self) -> usize {
        self.lower.vals.len() + self.upper.vals.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let n = self.n;
        let mut y = vec![0.0; n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.row_pinv[i]] = bi;
        }
        // L y = P b, unit diagonal stored first in each column
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.lower.col_ptr[k] + 1..self.lower.col_ptr[k + 1] {
                    y[self.lower.row_idx[p]] -= self.lower.vals[p] * yk;
                }
            }
        }
        // U z = y, diagonal stored last in each column
        for k in (0..n).rev() {
            let last = self.upper.col_ptr[k + 1] - 1;
            y[k] /= self.upper.vals[last];
            let yk = y[k];
            if yk != 0.0 {
                for p in self.upper.col_ptr[k]..last {
                    y[self.upper.row_idx[p]] -= self.upper.vals[p] * yk;
                }
            }
        }
        for (k, &c) in self.col_perm.iter().enumerate() {
            b[c] = y[k];
        }
        Ok(())
    }
}

/// Factorizes `a`; fails on a non-square input or a (numerically) zero pivot.
pub fn factorize(a: &SparseMatrix) -> Result<Factorization> {
    factorize_with_threshold(a, PIVOT_THRESHOLD)
}

/// [`factorize`] with a custom diagonal preference: the diagonal is kept as
/// pivot when it is at least `threshold` times the largest candidate.
pub fn factorize_with_threshold(a: &SparseMatrix, threshold: f64) -> Result<Factorization> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("pivot threshold {threshold} outside (0, 1]")));
    }
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Factorization {
            n,
            lower: Csc {
                col_ptr: vec![0],
                ..Default::default()
            },
            upper: Csc {
                col_ptr: vec![0],
                ..Default::default()
            },
            row_pinv: Vec::new(),
            col_perm: Vec::new(),
        });
    }
    let col_perm = fill_reducing_order(a)?;

    // column access to A
    let at = a.transpose();
    let a_col_ptr = at.row_offsets();
    let a_row_idx = at.col_indices();
    let a_vals = at.values();

    const UNSET: usize = usize::MAX;
    let mut lower = Csc {
        col_ptr: Vec::with_capacity(n + 1),
        row_idx: Vec::with_capacity(4 * a.nnz()),
        vals: Vec::with_capacity(4 * a.nnz()),
    };
    let mut upper = Csc {
        col_ptr: Vec::with_capacity(n + 1),
        row_idx: Vec::with_capacity(4 * a.nnz()),
        vals: Vec::with_capacity(4 * a.nnz()),
    };
    let mut pinv = vec![UNSET; n];
    let mut x = vec![0.0; n];
    let mut xi = vec![0usize; n];
    let mut stack = vec![0usize; n];
    let mut pstack = vec![0usize; n];
    let mut mark = vec![UNSET; n];

    for k in 0..n {
        lower.col_ptr.push(lower.vals.len());
        upper.col_ptr.push(upper.vals.len());
        let col = col_perm[k];
        let range = a_col_ptr[col]..a_col_ptr[col + 1];

        // symbolic: rows reachable from the pattern of A(:, col) through L
        let mut top = n;
        for &r in &a_row_idx[range.clone()] {
            if mark[r] != k {
                top = reach(r, k, &lower, &pinv, &mut mark, &mut stack, &mut pstack, &mut xi, top);
            }
        }

        // numeric: x = L \ A(:, col)
        for &i in &xi[top..n] {
            x[i] = 0.0;
        }
        let mut col_max = 0.0f64;
        for p in range {
            x[a_row_idx[p]] = a_vals[p];
            col_max = col_max.max(a_vals[p].abs());
        }
        for px in top..n {
            let j = xi[px];
            let jj = pinv[j];
            if jj == UNSET {
                continue;
            }
            let xj = x[j];
            if xj != 0.0 {
                for p in lower.col_ptr[jj] + 1..lower.col_ptr[jj + 1] {
                    x[lower.row_idx[p]] -= lower.vals[p] * xj;
                }
            }
        }

        // pivot selection
        let mut ipiv = UNSET;
        let mut amax = -1.0;
        for &i in &xi[top..n] {
            if pinv[i] == UNSET {
                let t = x[i].abs();
                if t > amax {
                    amax = t;
                    ipiv = i;
                }
            } else {
                upper.row_idx.push(pinv[i]);
                upper.vals.push(x[i]);
            }
        }
        if ipiv == UNSET || !(amax > SINGULAR_RELATIVE * col_max) || !amax.is_finite() {
            return Err(Error::SingularPivot {
                column: col,
                row: if ipiv == UNSET { col } else { ipiv },
            });
        }
        if pinv[col] == UNSET && x[col].abs() >= threshold * amax {
            ipiv = col;
        }
        let pivot = x[ipiv];
        upper.row_idx.push(k);
        upper.vals.push(pivot);
        pinv[ipiv] = k;
        lower.row_idx.push(ipiv);
        lower.vals.push(1.0);
        for &i in &xi[top..n] {
            if pinv[i] == UNSET {
                lower.row_idx.push(i);
                lower.vals.push(x[i] / pivot);
            }
            x[i] = 0.0;
        }
    }
    lower.col_ptr.push(lower.vals.len());
    upper.col_ptr.push(upper.vals.len());
    for r in lower.row_idx.iter_mut() {
        *r = pinv[*r];
    }
    Ok(Factorization {
        n,
        lower,
        upper,
        row_pinv: pinv,
        col_perm,
    })
}

/// Depth-first search from row `start` through the columns of `L` computed so
/// far; pushes the reached rows onto `xi[..top]` in topological order.
#[allow(clippy::too_many_arguments)]
fn reach(
    start: usize,
    stamp: usize,
    lower: &Csc,
    pinv: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
    pstack: &mut [usize],
    xi: &mut [usize],
    mut top: usize,
) -> usize {
    let mut head = 0usize;
    stack[0] = start;
    loop {
        let j = stack[head];
        let jj = pinv[j];
        if mark[j] != stamp {
            mark[j] = stamp;
            pstack[head] = if jj == usize::MAX { 0 } else { lower.col_ptr[jj] + 1 };
        }
        let end = if jj == usize::MAX { 0 } else { lower.col_ptr[jj + 1] };
        let mut descended = false;
        let mut p = pstack[head];
        while p < end {
            let i = lower.row_idx[p];
            p += 1;
            if mark[i] == stamp {
                continue;
            }
            pstack[head] = p;
            head += 1;
            stack[head] = i;
            descended = true;
            break;
        }
        if !descended {
            top -= 1;
            xi[top] = j;
            if head == 0 {
                break;
            }
            head -= 1;
        }
    }
    top
}

/// Approximate minimum degree ordering of the pattern of `A + Aᵀ`.
fn fill_reducing_order(a: &SparseMatrix) -> Result<Vec<usize>> {
    let n = a.nrows();
    // the CSR arrays of A are the CSC arrays of Aᵀ, whose symmetrized
    // pattern is the same as that of A; the diagonal is always included
    let mut ptr = Vec::with_capacity(n + 1);
    let mut idx = Vec::with_capacity(a.nnz() + n);
    ptr.push(0);
    for r in 0..n {
        let mut diag_done = false;
        for (c, _) in a.row(r) {
            if !diag_done && c >= r {
                if c != r {
                    idx.push(r);
                }
                diag_done = true;
            }
            idx.push(c);
        }
        if !diag_done {
            idx.push(r);
        }
        ptr.push(idx.len());
    }
    let control = amd::Control::default();
    match amd::order(n, &ptr, &idx, &control) {
        Ok((perm, _, _)) => Ok(perm),
        Err(status) => Err(Error::InvalidStructure(format!(
            "ordering failed: {status:?}"
        ))),
    }
}
