use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is numerically singular (min eigenvalue {min_eigenvalue:.3e})")]
    Singular { min_eigenvalue: f64 },

    #[error("matrix has a negative eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("coherency needs positive diagonal entries, got {value:.3e}")]
    NonPositiveDiagonal { value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frequency index {index} out of range 0..={max}")]
    FrequencyOutOfRange { index: usize, max: usize },

    #[error(
        "boundary block at frequency index {index} is not real (max imaginary part {imag:.3e})"
    )]
    BoundaryBlockNotReal { index: usize, imag: f64 },

    #[error("model spectral density is degenerate at frequency index {index} (min eigenvalue {min_eigenvalue:.3e})")]
    DegenerateSpectrum { index: usize, min_eigenvalue: f64 },

    #[error("regressor Gram matrix is rank deficient for VAR({order})")]
    RankDeficient { order: usize },

    #[error("VAR({order}) is not stationary (companion spectral radius {radius:.6})")]
    NonStationary { order: usize, radius: f64 },

    #[error("VAR transfer matrix is near-singular at omega = {omega:.6}")]
    TransferSingular { omega: f64 },

    #[error("expected {expected} hyperspherical angles, got {got}")]
    WrongAngleCount { expected: usize, got: usize },

    #[error("frequency grids do not match")]
    GridMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample too short: {0}")]
    InsufficientData(String),

    #[error("chain failed to find a finite initial posterior after {attempts} attempts")]
    ChainInit { attempts: usize },

    #[error("cached log-posterior {cached} disagrees with fresh evaluation {fresh}")]
    CacheIncoherent { cached: f64, fresh: f64 },

    #[error("study failed: {0}")]
    StudyFailed(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            Error::Csv(_) | Error::Parse(_) | Error::Json(_) => ErrorKind::Validation,
            Error::InvalidConfig(_)
            | Error::InsufficientData(_)
            | Error::DimensionMismatch { .. }
            | Error::FrequencyOutOfRange { .. }
            | Error::WrongAngleCount { .. }
            | Error::GridMismatch => ErrorKind::Validation,
            _ => ErrorKind::Numerical,
        }
    }
}
