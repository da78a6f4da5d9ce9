use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unstable system: spectral radius {spectral_radius} >= 1")]
    UnstableSystem { spectral_radius: f64 },

    #[error("unstable closed loop: spectral radius {spectral_radius} >= 1")]
    UnstableClosedLoop { spectral_radius: f64 },

    #[error("lyapunov iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("{what} is not symmetric")]
    NotSymmetric { what: String },

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPositiveSemidefinite { what: String, min_eigenvalue: f64 },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("(A, C) is not observable (rank {rank} < {n})")]
    NotObservable { rank: usize, n: usize },

    #[error("(A, B) is not controllable (rank {rank} < {n})")]
    NotControllable { rank: usize, n: usize },

    #[error("degenerate noise covariance: C Sigma C^T + R is singular")]
    DegenerateNoiseCovariance,

    #[error("singular matrix: {what}")]
    Singular { what: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid replay schedule: {0}")]
    InvalidSchedule(String),

    #[error("random system generation failed after {attempts} attempts")]
    RetriesExhausted { attempts: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }
}
