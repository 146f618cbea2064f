use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("requested width {width} is below the numerical rank {rank}")]
    WidthBelowRank { width: usize, rank: usize },

    #[error("column {0} has zero energy; prune before computing gradients or surrogate Hessians")]
    ZeroColumn(usize),

    #[error("surrogate Hessian is numerically singular (pivot {pivot:e} < {threshold:e}); prune columns or use lambda > 0")]
    SingularHessian { pivot: f64, threshold: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate observation at ({row}, {col})")]
    DuplicateObservation { row: usize, col: usize },

    #[error("index ({row}, {col}) out of range for {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("no observations")]
    NoObservations,

    #[error("denominator is zero: {0}")]
    ZeroDenominator(&'static str),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
