use thiserror::Error;

/// Errors produced by the geometry kernel and its numerical layers.
///
/// The variants are grouped by the exit-status contract of the CLI:
/// configuration problems map to status 2, numerical-environment
/// problems (degeneracies, lost continuations, diverging estimators)
/// map to status 3, and plain check failures are reported in the
/// verification output rather than through this type.
#[derive(Debug, Error)]
pub enum QigError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix entries contain NaN or infinity")]
    NonFinite,

    #[error("matrix is not Hermitian: max |A - A^dag| = {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigendecomposition failed for matrix with max-norm {norm:.3e}")]
    EigenFailure { norm: f64 },

    #[error("scalar function undefined at eigenvalue {eigenvalue:.6e}")]
    SpectrumDomain { eigenvalue: f64 },

    #[error("density matrix not strictly positive: min eigenvalue {min_eigenvalue:.3e} below floor {floor:.3e}")]
    NotPositive { min_eigenvalue: f64, floor: f64 },

    #[error("near-degenerate spectrum without a continuation anchor: eigenvalues {first:.9e} and {second:.9e} collide")]
    DegenerateSpectrum { first: f64, second: f64 },

    #[error("eigenbasis continuation lost: best overlap^2 = {overlap_sq:.3e} < 0.5; use a smaller path step")]
    ContinuationLost { overlap_sq: f64 },

    #[error("matrix inversion failed; condition estimate {condition:.3e}")]
    SingularMatrix { condition: f64 },

    #[error("metric tensor is degenerate: min eigenvalue {min_eigenvalue:.3e} below floor {floor:.3e}; index raising disabled")]
    DegenerateMetric { min_eigenvalue: f64, floor: f64 },

    #[error("finite-difference step {step:.3e} underflows the supported range")]
    StepUnderflow { step: f64 },

    #[error("extrapolated estimator diverged; residual sequence {residuals:?}")]
    EstimatorDiverged { residuals: Vec<f64> },

    #[error("generators are linearly dependent: Gram matrix min eigenvalue {min_eigenvalue:.3e}")]
    DependentGenerators { min_eigenvalue: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("holonomy requires at least two parameters, model has n = {n}")]
    NeedsTwoParameters { n: usize },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON parse failure: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QigError>;

impl QigError {
    /// Exit status for the CLI contract: 2 for configuration errors,
    /// 3 for numerical-environment errors.
    pub fn exit_status(&self) -> i32 {
        match self {
            QigError::Config(_)
            | QigError::Json(_)
            | QigError::Io(_)
            | QigError::NeedsTwoParameters { .. }
            | QigError::DimensionMismatch { .. }
            | QigError::NotSquare { .. } => 2,
            _ => 3,
        }
    }
}
