use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bodies {i} and {j} collide (distance {distance:e}, threshold {threshold:e})")]
    Collision {
        i: usize,
        j: usize,
        distance: f64,
        threshold: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration is the zero vector")]
    ZeroConfiguration,

    #[error("configuration is not on the S-sphere (|q|_S^2 = {norm_sq})")]
    NotNormalized { norm_sq: f64 },

    #[error("configuration is not a balanced configuration (residual {residual:e})")]
    NotASolution { residual: f64 },

    #[error("generator vanishes: {0}")]
    ZeroVector(String),

    #[error("spectrum invariant violated: {0}")]
    SpectrumInvariantViolation(String),

    #[error("kernel vector {index} is not annihilated by the form (relative residual {residual:e})")]
    KernelMismatch { index: usize, residual: f64 },

    #[error("path is not admissible: endpoint {endpoint} has nullity {nullity}")]
    NotAdmissible { endpoint: f64, nullity: usize },

    #[error("spectral flow {flow} disagrees with crossing count {crossings}")]
    FlowMismatch { flow: i64, crossings: i64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("accepted point drifted off the S-sphere or centre of mass (correction {correction:e})")]
    NormalizationDrift { correction: f64 },

    #[error("tangent is ambiguous: null space has dimension {dimension}")]
    AmbiguousTangent { dimension: usize },

    #[error("branch switch fell back onto the trivial branch (distance {distance:e})")]
    FellBackToTrivial { distance: f64 },

    #[error("branch record is empty")]
    EmptyBranch,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
