use std::io::{self, Write};

use super::SparseMatrix;

/// Writes the matrix in Matrix Market coordinate real general format
/// (1-based indices, rows in order).
pub fn write_matrix_market<W: Write>(a: &SparseMatrix, mut w: W) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
    }
    Ok(())
}
