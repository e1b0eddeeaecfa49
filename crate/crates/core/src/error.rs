use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite (pivot {index} = {value:e})")]
    NotSpd { index: usize, value: f64 },

    #[error("basis breakdown: non-finite entries in column {column}")]
    BasisBreakdown { column: usize },

    #[error("solver breakdown at outer iteration {outer}: {reason}")]
    SolverBreakdown { outer: usize, reason: String },

    #[error("column {column} has zero norm")]
    ZeroNorm { column: usize },

    #[error("block is numerically rank deficient")]
    RankDeficient,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("problem size {n} exceeds the dense analysis limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("{what} = {value} outside the valid range {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: String,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            expected,
            found,
        })
    }
}
