use std::fmt;

/// Errors produced by the solver library.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not conform.
    DimensionMismatch(String),
    /// A matrix or vector index is out of range.
    IndexOutOfBounds(String),
    /// Structural invariant of a sparse matrix violated (unsorted columns,
    /// bad offsets, ...).
    InvalidStructure(String),
    /// A diagonal entry required by a scaling or triangular sweep is zero.
    ZeroDiagonal(usize),
    /// A local block that must be full rank is not.
    RankDeficient(String),
    /// The near-kernel block supplied to a setup routine is rank deficient.
    KernelRankDeficient { sigma_min: f64, sigma_max: f64 },
    /// A matrix declared symmetric positive definite fails a symmetry or
    /// positivity check.
    NotSpd(String),
    /// The energy-minimization PCG met a non-positive curvature direction,
    /// which signals an inconsistent pattern or constraint set.
    IndefiniteBreakdown { iteration: usize, curvature: f64 },
    /// A NaN or infinity appeared where finite values are required.
    NonFinite(String),
    /// A configuration value is outside its documented range.
    InvalidConfig(String),
    /// Matrix Market parsing failure.
    MatrixMarket { line: usize, msg: String },
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            Error::IndexOutOfBounds(m) => write!(f, "index out of bounds: {m}"),
            Error::InvalidStructure(m) => write!(f, "invalid sparse structure: {m}"),
            Error::ZeroDiagonal(i) => write!(f, "zero diagonal entry at row {i}"),
            Error::RankDeficient(m) => write!(f, "rank deficient block: {m}"),
            Error::KernelRankDeficient { sigma_min, sigma_max } => write!(
                f,
                "near-kernel basis is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})"
            ),
            Error::NotSpd(m) => write!(f, "matrix is not SPD: {m}"),
            Error::IndefiniteBreakdown { iteration, curvature } => write!(
                f,
                "indefinite breakdown in energy minimization at iteration {iteration} (curvature = {curvature:e})"
            ),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            Error::MatrixMarket { line, msg } => {
                write!(f, "Matrix Market parse error at line {line}: {msg}")
            }
            Error::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
