use super::SparseMatrix;
use crate::error::{Error, Result};

/// One entry of a block grid: a matrix scaled by a weight.
#[derive(Clone, Copy, Debug)]
pub struct WeightedBlock<'a> {
    pub matrix: &'a SparseMatrix,
    pub weight: f64,
}

impl<'a> WeightedBlock<'a> {
    pub fn new(matrix: &'a SparseMatrix, weight: f64) -> Self {
        Self { matrix, weight }
    }

    pub fn unit(matrix: &'a SparseMatrix) -> Self {
        Self::new(matrix, 1.0)
    }
}

/// Concatenates a rectangular grid of optional weighted blocks.
///
/// Block row heights and column widths are inferred from the blocks present;
/// every block row and column needs at least one block. Blocks with weight
/// zero are skipped entirely, so they leave no explicit zeros behind.
pub fn block_assemble(grid: &[Vec<Option<WeightedBlock<'_>>>]) -> Result<SparseMatrix> {
    let nbr = grid.len();
    if nbr == 0 {
        return Ok(SparseMatrix::zeros(0, 0));
    }
    let nbc = grid[0].len();
    if grid.iter().any(|row| row.len() != nbc) {
        return Err(Error::BlockLayout("block rows have different lengths".into()));
    }

    let mut heights = vec![None; nbr];
    let mut widths = vec![None; nbc];
    for (i, row) in grid.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            if let Some(b) = blk {
                let (h, w) = (b.matrix.nrows(), b.matrix.ncols());
                match heights[i] {
                    None => heights[i] = Some(h),
                    Some(prev) if prev != h => {
                        return Err(Error::BlockLayout(format!(
                            "block ({i},{j}) has {h} rows, block row {i} has {prev}"
                        )))
                    }
                    _ => {}
                }
                match widths[j] {
                    None => widths[j] = Some(w),
                    Some(prev) if prev != w => {
                        return Err(Error::BlockLayout(format!(
                            "block ({i},{j}) has {w} columns, block column {j} has {prev}"
                        )))
                    }
                    _ => {}
                }
            }
        }
    }
    let heights: Vec<usize> = heights
        .into_iter()
        .enumerate()
        .map(|(i, h)| h.ok_or_else(|| Error::BlockLayout(format!("block row {i} is empty"))))
        .collect::<Result<_>>()?;
    let widths: Vec<usize> = widths
        .into_iter()
        .enumerate()
        .map(|(j, w)| w.ok_or_else(|| Error::BlockLayout(format!("block column {j} is empty"))))
        .collect::<Result<_>>()?;
    block_assemble_sized(&heights, &widths, grid)
}

/// Like [`block_assemble`] but with explicit block sizes, so that entirely
/// empty block rows or columns are allowed.
pub fn block_assemble_sized(
    heights: &[usize],
    widths: &[usize],
    grid: &[Vec<Option<WeightedBlock<'_>>>],
) -> Result<SparseMatrix> {
    if grid.len() != heights.len() || grid.iter().any(|r| r.len() != widths.len()) {
        return Err(Error::BlockLayout("grid shape does not match sizes".into()));
    }
    let col_start: Vec<usize> = widths
        .iter()
        .scan(0, |acc, &w| {
            let s = *acc;
            *acc += w;
            Some(s)
        })
        .collect();
    let nrows: usize = heights.iter().sum();
    let ncols: usize = widths.iter().sum();

    let mut row_offsets = Vec::with_capacity(nrows + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for (bi, row) in grid.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            if let Some(b) = blk {
                if b.matrix.nrows() != heights[bi] || b.matrix.ncols() != widths[bj] {
                    return Err(Error::BlockLayout(format!(
                        "block ({bi},{bj}) is {}x{}, expected {}x{}",
                        b.matrix.nrows(),
                        b.matrix.ncols(),
                        heights[bi],
                        widths[bj]
                    )));
                }
            }
        }
        for r in 0..heights[bi] {
            // blocks in a row are visited left to right, so columns stay sorted
            for (bj, blk) in row.iter().enumerate() {
                if let Some(b) = blk {
                    if b.weight == 0.0 {
                        continue;
                    }
                    for (c, v) in b.matrix.row(r) {
                        col_indices.push(col_start[bj] + c);
                        values.push(b.weight * v);
                    }
                }
            }
            row_offsets.push(col_indices.len());
        }
    }
    SparseMatrix::from_csr(nrows, ncols, row_offsets, col_indices, values)
}
