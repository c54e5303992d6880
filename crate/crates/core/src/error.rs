use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular matrix: zero pivot at index {pivot}")]
    SingularPivot { pivot: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point {index} at {point:?} lies outside the mesh")]
    PointOutside { index: usize, point: [f64; 2] },

    #[error("material coefficient must be positive, got {value} at node {node}")]
    NonPositiveKappa { node: usize, value: f64 },

    #[error("system is singular at omega = {omega} rad/s")]
    Resonance { omega: f64 },

    #[error("Sobol dimension {dim} exceeds the {max} available direction numbers")]
    SobolDimension { dim: usize, max: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("QMC sample {index} failed: {source}")]
    SampleFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
