use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid step must be positive on every axis")]
    NonPositiveStep,
    #[error("axis {axis} yields fewer than 2 sites")]
    DegenerateDomain { axis: usize },
    #[error("invalid grid specification: {0}")]
    InvalidGrid(String),
    #[error("site index {index} out of range for {n} sites")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("neighborhood radius must be positive")]
    NonPositiveRadius,

    #[error("field graph contains a cycle")]
    CycleDetected,
    #[error("self edge on field {0}")]
    SelfEdge(usize),
    #[error("line {line}: cannot parse `{text}`")]
    MalformedLine { line: usize, text: String },
    #[error("unknown field {0}")]
    UnknownField(usize),

    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("Tri-Wave translation must be non-zero")]
    ZeroDelta,
    #[error("compact support radius must be positive")]
    NonPositiveR,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Cholesky factorization failed: {0}")]
    CholeskyFailure(String),
    #[error("matrix is not symmetric (max |m - m^T| = {max_diff:e})")]
    AsymmetricInput { max_diff: f64 },
    #[error("no regularization in {iters} ladder steps produced positive definite matrices")]
    RegularizationExhausted { iters: usize },
    #[error("positive definiteness failure: {0}")]
    PdFailure(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("edge {parent}>{child} has no cross kernel")]
    MissingKernel { parent: usize, child: usize },
    #[error("conditional covariance block of field {0} is not positive definite")]
    NonPdBlock(usize),

    #[error("conditioning system is singular")]
    SingularSystem,
    #[error("fit and test index sets overlap at index {0}")]
    IndexOverlap(usize),
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("test set is empty")]
    EmptyTestSet,

    #[error("unsupported benchmark scenario: {0}")]
    ScenarioUnsupported(String),
    #[error("need at least {needed} distinct points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
