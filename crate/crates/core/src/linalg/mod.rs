//! Sparse linear algebra: CSR storage, block assembly, a reusable sparse LU
//! and a dense reference path.

mod block;
mod csr;
mod dense;
mod lu;
mod mtx;

pub use block::{block_assemble, block_assemble_sized, WeightedBlock};
pub use csr::SparseMatrix;
pub use dense::{DenseMatrix, DENSE_GUARD};
pub use lu::{factorize, factorize_with_threshold, Factorization, PIVOT_THRESHOLD};
pub use mtx::write_matrix_market;

/// Relative residual `‖A x − b‖₂ / ‖b‖₂` (absolute when `b = 0`).
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.spmv(x).expect("dimensions checked by caller");
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
