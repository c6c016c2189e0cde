use std::fmt;

/// Error type shared by all numerical kernels in this crate.
#[derive(Debug)]
pub enum Error {
    /// A triplet or vector index fell outside the matrix dimensions.
    IndexOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        nrows: usize,
        ncols: usize,
    },
    /// Operand sizes do not line up.
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },
    /// Sampled symmetry check failed on an entry pair.
    NotSymmetric { row: usize, col: usize, diff: f64 },
    /// A non-positive pivot (or Rayleigh quotient) was met while treating a
    /// matrix as symmetric positive definite.
    SpdViolation { index: usize, pivot: f64 },
    /// Invalid mesh/model/CLI configuration; the message names the violated
    /// constraint.
    Config(String),
    /// Non-finite values appeared during an iterative solve.
    Divergence { iteration: usize },
    /// The preconditioner produced `<z, r> <= 0`, so it is not positive
    /// definite as an operator.
    IndefinitePreconditioner { iteration: usize },
    /// A dense eigen-analysis was requested beyond the desk-scale guard.
    DenseScaleGuard { n: usize, limit: usize },
    /// An operator expected to be symmetric in the relevant inner product
    /// was not, beyond tolerance.
    SymmetryViolation { defect: f64 },
    /// An operator mapped a test vector to (numerically) zero.
    DegenerateOperator,
    /// An aggregate was requested over an empty collection.
    EmptyInput(&'static str),
    /// File I/O failure, with the offending path.
    Io { path: String, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::IndexOutOfRange {
                row,
                col,
                value,
                nrows,
                ncols,
            } => write!(
                f,
                "triplet ({row}, {col}, {value}) out of range for a {nrows}x{ncols} matrix"
            ),
            Error::DimensionMismatch {
                expected,
                found,
                context,
            } => write!(f, "{context}: expected length {expected}, got {found}"),
            Error::NotSymmetric { row, col, diff } => write!(
                f,
                "matrix not symmetric: entries ({row},{col}) and ({col},{row}) differ by {diff:e}"
            ),
            Error::SpdViolation { index, pivot } => write!(
                f,
                "matrix not positive definite: pivot {pivot:e} at index {index}"
            ),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Divergence { iteration } => {
                write!(f, "non-finite value at iteration {iteration}")
            }
            Error::IndefinitePreconditioner { iteration } => write!(
                f,
                "preconditioner not positive definite (<z,r> <= 0 at iteration {iteration})"
            ),
            Error::DenseScaleGuard { n, limit } => {
                write!(f, "dense analysis guard: n = {n} exceeds limit {limit}")
            }
            Error::SymmetryViolation { defect } => {
                write!(f, "operator symmetry violated (defect {defect:e})")
            }
            Error::DegenerateOperator => write!(f, "operator maps a test vector to zero"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::Io { path, source } => write!(f, "i/o error on {path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
