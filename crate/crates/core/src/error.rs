use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("inconsistent block layout: {0}")]
    BlockLayout(String),

    #[error("singular pivot in column {column} (original row {row})")]
    SingularPivot { column: usize, row: usize },

    #[error("matrix is not square ({nrows}x{ncols})")]
    NotSquare { nrows: usize, ncols: usize },

    #[error("dense conversion of {entries} entries exceeds the guard of {limit}")]
    SizeGuard { entries: usize, limit: usize },

    #[error("degenerate element {index}")]
    DegenerateElement { index: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ill-posed parameter combination: {0}")]
    IllPosed(String),

    #[error("BDF order {0} is outside 1..=5")]
    InvalidOrder(usize),

    #[error("history holds {got} levels, {needed} required")]
    IncompleteHistory { needed: usize, got: usize },

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
